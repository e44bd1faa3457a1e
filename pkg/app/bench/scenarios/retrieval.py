"""Blocks scanned to find a committed transaction, by number of ledgers."""

from __future__ import annotations

import logging
import random
import time
from pathlib import Path

import numpy as np

from app.bench.config import ScenarioSpec
from app.core.ranges import allocate_ranges, code_of_transaction, find_range, prefix_length
from app.core.types import Block, GenesisBlock, GenesisEntry, Transaction
from app.crypto.hashing import Digest
from app.crypto.signing import make_scheme
from app.ledger.forest import LedgerForest
from app.ledger.persistence import read_forest

from . import scenario_registry
from .base import Scenario, ScenarioResult

logger = logging.getLogger(__name__)


def synthetic_forest(j: int, transactions: int, block_size: int, seed: int) -> LedgerForest:
    """One epoch with ``j`` ledgers holding ``transactions`` in full blocks.

    Transactions are bucketed by consensus code and chunked into blocks of
    ``block_size`` in creation order.
    """
    scheme = make_scheme("mac")
    rng = random.Random(f"retrieval:{seed}:{j}")
    ranges = allocate_ranges(j)
    keys = [scheme.generate(rng) for _ in ranges]
    genesis = GenesisBlock(
        epoch=1,
        total_val=j,
        entries=tuple(
            GenesisEntry(kp.public, code_range, None, None) for kp, code_range in zip(keys, ranges)
        ),
        prev_genesis=None,
        author_pk=keys[0].public,
        timestamp=0,
    )
    forest = LedgerForest()
    forest.open_epoch(genesis)
    client = scheme.generate(rng)
    k = prefix_length(j)
    buckets: list[list[Transaction]] = [[] for _ in ranges]
    for number in range(transactions):
        tx = Transaction.create(scheme, client, number, number.to_bytes(8, "big"))
        index = find_range(ranges, code_of_transaction(tx, k))
        if index is not None:
            buckets[index].append(tx)
    for index, bucket in enumerate(buckets):
        key = (1, ranges[index])
        for start in range(0, len(bucket), block_size):
            chunk = bucket[start : start + block_size]
            block = Block.assemble(
                scheme,
                keys[index],
                epoch=1,
                height=forest.next_height(key),
                prev_hash=forest.head(key),
                code_range=ranges[index],
                ledger_hashes=None,
                transactions=chunk,
                timestamp=chunk[-1].timestamp,
            )
            forest.append_block(block)
    return forest


def exact_mean_scanned(forest: LedgerForest) -> float:
    """Mean blocks scanned over every committed transaction, looked up once each.

    Ledger sizes differ, so this is the oracle rather than ``blocks / 2j``.
    """
    total = 0
    count = 0
    for ledger in forest.ledgers.values():
        for index, block in enumerate(ledger.blocks):
            total += (index + 1) * len(block.transactions)
            count += len(block.transactions)
    return total / count if count else 0.0


def committed_ids(forest: LedgerForest) -> list[Digest]:
    return [tx.t_id for _, block in forest.iter_blocks() for tx in block.transactions]


class Retrieval(Scenario):
    """Sampled lookups against an exact expectation for each ``j``.

    With ``forest_file`` set, the stored forest is measured instead and
    ``js`` is ignored.
    """

    name = "retrieval"
    header = (
        "j",
        "blocks",
        "mean_blocks_scanned",
        "expected",
        "naive_expected",
        "single_ledger",
        "speedup",
        "wall_ms",
    )

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        transactions = int(spec.param("transactions", 100_000))
        samples = int(spec.param("samples", 2_000))
        tolerance = float(spec.param("tolerance", 0.15))
        block_size = spec.sim.protocol.block.size
        rng = np.random.default_rng(spec.sim.seed)
        stored = spec.param("forest_file", None)
        if stored:
            loaded = read_forest(Path(str(stored)))
            forests = [(len(loaded.ledgers), loaded)]
        else:
            forests = [
                (j, synthetic_forest(j, transactions, block_size, spec.sim.seed))
                for j in spec.int_list("js", [10, 50, 100])
            ]
        means: list[float] = []
        speedups: list[float] = []
        within = True
        tracks = True
        for j, forest in forests:
            ids = committed_ids(forest)
            if not ids:
                continue
            picks = rng.choice(len(ids), size=min(samples, len(ids)) if stored else samples)
            started = time.perf_counter()
            scanned = [forest.retrieve_transaction(ids[int(pick)]).blocks_scanned for pick in picks]
            wall_ms = (time.perf_counter() - started) * 1000
            blocks = forest.block_count()
            mean = float(np.mean(scanned))
            expected = exact_mean_scanned(forest)
            single = (blocks + 1) / 2
            within = within and abs(mean - expected) <= tolerance * expected
            means.append(mean)
            speedups.append(single / mean)
            # An even spread over j ledgers scans about blocks / 2j + 1/2 blocks.
            ideal = single / (blocks / (2 * j) + 0.5)
            tracks = tracks and abs(single / mean - ideal) <= tolerance * ideal
            logger.info("j=%d: %.2f blocks scanned on average over %d blocks", j, mean, blocks)
            result.rows.append(
                (
                    j,
                    blocks,
                    round(mean, 3),
                    round(expected, 3),
                    round(blocks / (2 * j), 3),
                    round(single, 3),
                    round(single / mean, 3),
                    round(wall_ms, 3),
                )
            )
            result.forest = forest
        result.checks["scan-matches-expectation"] = within and bool(means)
        if not stored:
            result.checks["scan-falls-with-j"] = all(a > b for a, b in zip(means, means[1:]))
            result.checks["speedup-grows-with-j"] = all(
                b > a for a, b in zip(speedups, speedups[1:])
            )
            result.checks["speedup-tracks-j"] = tracks and bool(speedups)
        return result


scenario_registry.register(Retrieval.name, Retrieval)
