"""Permissioned ledger with an execute-order-validate pipeline.

Transaction flow mirrors the Fabric model at desk scale, entirely
in-process:

1. execute: a signed proposal runs against the current committed state and
   yields a read/write set; contract errors abort here with no rwset.
2. endorse: every roster peer re-executes, checks it got an identical
   rwset, and signs the transaction hash.
3. order: a solo orderer batches transactions in arrival order, cutting a
   block on size or timeout.
4. validate: per transaction, endorsement policy first, then MVCC (every
   read must still be at the version it saw, counting writes by earlier
   valid transactions in the same block); exactly one flag each.
5. commit: the block is appended to the hash-chained journal and valid
   writes land in the versioned world state.

Blocks persist as one append-only file of canonically encoded JSON lines,
so replaying valid transactions from genesis reproduces the world state
exactly, and any byte-level tampering is detectable from hashes alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean
from typing import Protocol

from .clock import Clock, WallClock
from .codec import canonical_json, sha256
from .did import Address, KeyPair, derive_address, generate_keypair, verify_signature
from .store import ContentStore

VALID = "VALID"
MVCC_CONFLICT = "MVCC_CONFLICT"
POLICY_FAILURE = "POLICY_FAILURE"
FLAG_VALUES = (VALID, MVCC_CONFLICT, POLICY_FAILURE)

ZERO_HASH = bytes(32)
ZERO_ADDRESS = Address(bytes(20))

BLOCKS_FILE = "blocks.jsonl"
GENESIS_FILE = "genesis.json"
LOCK_FILE = ".lock"

# world-state key namespaces; prefix scans implement the "view all" queries
KEY_DID = "did/"
KEY_DEVICE = "device/"
KEY_ASSET = "asset/"
KEY_NONCE = "nonce/"
KEY_CONFIG = "config/"

Version = tuple[int, int]  # (block number, tx index within block)


class LedgerError(Exception):
    """Base for ledger pipeline failures."""


class InvalidProposalSignature(LedgerError):
    """Proposal rejected before execution: bad signature or key/address mismatch."""


class UnknownContract(LedgerError):
    pass


class UnknownFunction(LedgerError):
    pass


class UnknownPeer(LedgerError):
    pass


class RwsetMismatch(LedgerError):
    """A peer's re-execution diverged from the submitted read/write set."""


class EmptyBatch(LedgerError):
    pass


class NonSequentialBlock(LedgerError):
    pass


class LedgerLocked(LedgerError):
    """Another live process holds the ledger directory."""


class ContractError(LedgerError):
    """Typed business-logic failure; carries a stable code and no state change."""

    def __init__(self, code: str, message: str, details: dict | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details = details or {}


@dataclass
class TxProposal:
    """A signed request to run one contract function.

    ``invoker_key`` must hash to ``invoker`` (that is how the signature is
    checked against the invoker's registered key) and ``timestamp`` is the
    submission-time clock reading, so contract execution is reproducible
    on every endorsing peer.
    """

    invoker: Address
    invoker_key: bytes
    contract: str
    function: str
    args: list[str]
    nonce: bytes
    timestamp: int
    signature: bytes = b""

    def _unsigned_dict(self) -> dict:
        return {
            "args": list(self.args),
            "contract": self.contract,
            "function": self.function,
            "invoker": str(self.invoker),
            "invokerKey": self.invoker_key.hex(),
            "nonce": self.nonce.hex(),
            "timestamp": self.timestamp,
        }

    def signing_bytes(self) -> bytes:
        return canonical_json(self._unsigned_dict())

    def sign(self, keypair: KeyPair) -> "TxProposal":
        self.signature = keypair.sign(self.signing_bytes())
        return self

    def to_dict(self) -> dict:
        d = self._unsigned_dict()
        d["signature"] = self.signature.hex()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TxProposal":
        return cls(
            invoker=Address.from_text(d["invoker"]),
            invoker_key=bytes.fromhex(d["invokerKey"]),
            contract=d["contract"],
            function=d["function"],
            args=list(d["args"]),
            nonce=bytes.fromhex(d["nonce"]),
            timestamp=int(d["timestamp"]),
            signature=bytes.fromhex(d["signature"]),
        )


@dataclass
class ReadWriteSet:
    """Keys read (with the version seen) and keys written (None = delete)."""

    reads: list[tuple[str, Version | None]] = field(default_factory=list)
    writes: list[tuple[str, bytes | None]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "reads": [[k, list(v) if v is not None else None] for k, v in self.reads],
            "writes": [[k, v.hex() if v is not None else None] for k, v in self.writes],
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ReadWriteSet":
        return cls(
            reads=[(k, tuple(v) if v is not None else None) for k, v in d["reads"]],
            writes=[(k, bytes.fromhex(v) if v is not None else None) for k, v in d["writes"]],
        )


@dataclass
class Endorsement:
    peer_id: str
    signature: bytes

    def to_dict(self) -> dict:
        return {"peerId": self.peer_id, "signature": self.signature.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "Endorsement":
        return cls(peer_id=d["peerId"], signature=bytes.fromhex(d["signature"]))


def transaction_hash(proposal: TxProposal, rwset: ReadWriteSet) -> bytes:
    """The txId: hash of the canonical (proposal, rwset) encoding.

    Endorsements are excluded so that attaching or stripping them never
    changes a transaction's identity.
    """
    return sha256(canonical_json({"proposal": proposal.to_dict(),
                                  "rwset": rwset.to_dict()}))


@dataclass
class Transaction:
    proposal: TxProposal
    rwset: ReadWriteSet
    endorsements: list[Endorsement]

    @property
    def tx_id(self) -> bytes:
        return transaction_hash(self.proposal, self.rwset)

    def to_dict(self) -> dict:
        return {
            "endorsements": [e.to_dict() for e in self.endorsements],
            "proposal": self.proposal.to_dict(),
            "rwset": self.rwset.to_dict(),
            "txId": self.tx_id.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transaction":
        return cls(
            proposal=TxProposal.from_dict(d["proposal"]),
            rwset=ReadWriteSet.from_dict(d["rwset"]),
            endorsements=[Endorsement.from_dict(e) for e in d["endorsements"]],
        )


@dataclass
class Block:
    """One journal entry; ``validation_flags`` is None until validated."""

    number: int
    prev_hash: bytes
    data_hash: bytes
    transactions: list[Transaction]
    validation_flags: list[str] | None = None

    @staticmethod
    def compute_data_hash(transactions: list[Transaction]) -> bytes:
        return sha256(canonical_json([t.to_dict() for t in transactions]))

    def flags_hash(self) -> bytes:
        if self.validation_flags is None:
            raise ValueError("validation flags not set")
        return sha256(canonical_json(self.validation_flags))

    def header_dict(self) -> dict:
        return {
            "dataHash": self.data_hash.hex(),
            "flagsHash": self.flags_hash().hex(),
            "number": self.number,
            "prevHash": self.prev_hash.hex(),
        }

    def header_hash(self) -> bytes:
        """Hash chained into the next block's prevHash."""
        return sha256(canonical_json(self.header_dict()))

    def to_dict(self) -> dict:
        d = self.header_dict()
        d["transactions"] = [t.to_dict() for t in self.transactions]
        d["validationFlags"] = list(self.validation_flags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(
            number=int(d["number"]),
            prev_hash=bytes.fromhex(d["prevHash"]),
            data_hash=bytes.fromhex(d["dataHash"]),
            transactions=[Transaction.from_dict(t) for t in d["transactions"]],
            validation_flags=list(d["validationFlags"]),
        )


@dataclass(frozen=True)
class EndorsementPolicy:
    """m-of-n: a transaction needs ``threshold`` distinct valid peer signatures."""

    threshold: int
    roster: dict[str, bytes]  # peer id -> public key

    def __post_init__(self):
        if not 1 <= self.threshold <= len(self.roster):
            raise ValueError(
                f"threshold {self.threshold} out of range for roster of {len(self.roster)}")


class WorldState:
    """Current key -> (value, version) view of all valid transactions."""

    def __init__(self):
        self._data: dict[str, tuple[bytes, Version]] = {}

    def __len__(self) -> int:
        return len(self._data)

    def get(self, key: str) -> tuple[bytes, Version] | None:
        return self._data.get(key)

    def range(self, prefix: str) -> list[tuple[str, bytes, Version]]:
        """All entries whose key starts with prefix, sorted by key."""
        return [(k, v[0], v[1]) for k, v in sorted(self._data.items())
                if k.startswith(prefix)]

    def apply(self, writes: list[tuple[str, bytes | None]], version: Version) -> None:
        for key, value in writes:
            if value is None:
                self._data.pop(key, None)
            else:
                self._data[key] = (value, version)

    def items(self) -> list[tuple[str, tuple[bytes, Version]]]:
        return sorted(self._data.items())


class StateView(Protocol):
    """Read-only state access, satisfied by WorldState."""

    def get(self, key: str) -> tuple[bytes, Version] | None: ...

    def range(self, prefix: str) -> list[tuple[str, bytes, Version]]: ...


class TxContext:
    """Execution context handed to contract functions.

    Records every state read with the version it saw and stages writes in
    a deterministic order; reads of keys already written in this
    transaction return the staged value without touching the snapshot.
    """

    def __init__(self, snapshot: StateView, store: ContentStore, proposal: TxProposal):
        self._snapshot = snapshot
        self.store = store
        self.proposal = proposal
        self._reads: dict[str, Version | None] = {}
        self._writes: dict[str, bytes | None] = {}

    @property
    def invoker(self) -> Address:
        return self.proposal.invoker

    @property
    def timestamp(self) -> int:
        return self.proposal.timestamp

    def get(self, key: str) -> bytes | None:
        if key in self._writes:
            return self._writes[key]
        entry = self._snapshot.get(key)
        if key not in self._reads:
            self._reads[key] = entry[1] if entry is not None else None
        return entry[0] if entry is not None else None

    def put(self, key: str, value: bytes) -> None:
        self._writes[key] = value

    def delete(self, key: str) -> None:
        self._writes[key] = None

    def rwset(self) -> ReadWriteSet:
        return ReadWriteSet(
            reads=list(self._reads.items()),
            writes=list(self._writes.items()),
        )


class Contract(Protocol):
    """Deterministic business logic dispatched by name."""

    name: str

    def invoke(self, ctx: TxContext, function: str, args: list[str]) -> bytes: ...


@dataclass
class PeerSpec:
    peer_id: str
    seed: bytes

    @property
    def keypair(self) -> KeyPair:
        return generate_keypair(self.seed)


@dataclass
class RegistrarSpec:
    name: str
    seed: bytes

    @property
    def keypair(self) -> KeyPair:
        return generate_keypair(self.seed)

    @property
    def address(self) -> Address:
        return derive_address(self.keypair.public_key)


# fixed provisioning seeds for the default desk-scale network
_DEFAULT_PEER_SEEDS = {
    "peer1": sha256(b"iotid/peer/1"),
    "peer2": sha256(b"iotid/peer/2"),
    "peer3": sha256(b"iotid/peer/3"),
}
_DEFAULT_REGISTRAR_SEED = sha256(b"iotid/registrar/1")


@dataclass
class GenesisConfig:
    """Network provisioning: peer roster, endorsement policy, block cutting."""

    peers: list[PeerSpec]
    registrars: list[RegistrarSpec]
    threshold: int | None = None  # None -> majority
    max_block_txs: int = 10
    batch_timeout: float = 2.0

    def effective_threshold(self) -> int:
        if self.threshold is not None:
            return self.threshold
        return len(self.peers) // 2 + 1

    def policy(self) -> EndorsementPolicy:
        roster = {p.peer_id: p.keypair.public_key for p in self.peers}
        if len(roster) != len(self.peers):
            raise ValueError("duplicate peer ids in roster")
        return EndorsementPolicy(threshold=self.effective_threshold(), roster=roster)

    def registrar_addresses(self) -> list[str]:
        return sorted(str(r.address) for r in self.registrars)

    def to_dict(self) -> dict:
        return {
            "batchTimeoutSeconds": self.batch_timeout,
            "maxBlockTxs": self.max_block_txs,
            "endorsementThreshold": self.effective_threshold(),
            "peers": [{"id": p.peer_id, "seed": p.seed.hex(),
                       "publicKey": p.keypair.public_key.hex()} for p in self.peers],
            "registrars": [{"name": r.name, "seed": r.seed.hex(),
                            "address": str(r.address)} for r in self.registrars],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenesisConfig":
        peers = [PeerSpec(p["id"], bytes.fromhex(p["seed"])) for p in d["peers"]]
        registrars = [RegistrarSpec(r["name"], bytes.fromhex(r["seed"]))
                      for r in d.get("registrars", [])]
        cfg = cls(
            peers=peers,
            registrars=registrars,
            threshold=int(d["endorsementThreshold"]) if "endorsementThreshold" in d else None,
            max_block_txs=int(d.get("maxBlockTxs", 10)),
            batch_timeout=float(d.get("batchTimeoutSeconds", 2.0)),
        )
        cfg.policy()  # surface roster/threshold problems at load time
        return cfg

    @classmethod
    def default(cls) -> "GenesisConfig":
        return cls(
            peers=[PeerSpec(pid, seed) for pid, seed in _DEFAULT_PEER_SEEDS.items()],
            registrars=[RegistrarSpec("registrar", _DEFAULT_REGISTRAR_SEED)],
        )

    @classmethod
    def load(cls, path: str | Path) -> "GenesisConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TxTimings:
    tx_id: bytes
    submit_time: float
    commit_time: float | None = None
    flag: str | None = None


@dataclass
class MetricsReport:
    committed_tx_count: int
    throughput_tx_per_sec: float
    latency_min: float
    latency_mean: float
    latency_p95: float

    def to_dict(self) -> dict:
        return {
            "committedTxCount": self.committed_tx_count,
            "throughputTxPerSec": self.throughput_tx_per_sec,
            "latencies": {
                "min": self.latency_min,
                "mean": self.latency_mean,
                "p95": self.latency_p95,
            },
        }


@dataclass
class ChainReport:
    ok: bool
    height: int
    bad_block: int | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        return {"ok": self.ok, "height": self.height,
                "badBlock": self.bad_block, "reason": self.reason}


class LedgerEngine:
    """Single-channel ledger: solo ordering, m-of-n endorsement, MVCC commit.

    Proposal execution is pure over the committed state; ordering,
    validation, and commit run as one serialized pipeline. Queries only
    ever see fully committed blocks.
    """

    def __init__(self, directory: str | Path, genesis: GenesisConfig,
                 store: ContentStore, contracts: dict[str, Contract],
                 clock: Clock | None = None, commit_tick: float = 0.0,
                 _create: bool = False):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self.genesis = genesis
        self.store = store
        self.contracts = dict(contracts)
        self.clock = clock if clock is not None else WallClock()
        self.commit_tick = commit_tick
        self.policy = genesis.policy()
        self._peers = {p.peer_id: p.keypair for p in genesis.peers}
        self.state = WorldState()
        self._height = 0
        self._tip_hash = ZERO_HASH
        self._pending: list[Transaction] = []
        self._pending_since: float | None = None
        self._timings: list[TxTimings] = []
        self._acquire_lock()
        if _create:
            self._write_genesis()
        else:
            self._replay()

    # -- lifecycle -----------------------------------------------------

    @classmethod
    def create(cls, directory: str | Path, genesis: GenesisConfig,
               store: ContentStore, contracts: dict[str, Contract],
               clock: Clock | None = None, commit_tick: float = 0.0) -> "LedgerEngine":
        """Provision a fresh ledger directory and commit the genesis block."""
        directory = Path(directory)
        if (directory / BLOCKS_FILE).exists():
            raise LedgerError(f"ledger already exists at {directory}")
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / GENESIS_FILE, "w", encoding="utf-8") as fh:
            json.dump(genesis.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return cls(directory, genesis, store, contracts, clock, commit_tick,
                   _create=True)

    @classmethod
    def open(cls, directory: str | Path, store: ContentStore,
             contracts: dict[str, Contract], clock: Clock | None = None,
             commit_tick: float = 0.0) -> "LedgerEngine":
        """Open an existing ledger, rebuilding world state by replay."""
        directory = Path(directory)
        if not (directory / BLOCKS_FILE).exists():
            raise LedgerError(f"no ledger at {directory}")
        genesis = GenesisConfig.load(directory / GENESIS_FILE)
        return cls(directory, genesis, store, contracts, clock, commit_tick)

    def close(self) -> None:
        self._release_lock()

    def __enter__(self) -> "LedgerEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _acquire_lock(self) -> None:
        lock = self._dir / LOCK_FILE
        if lock.exists():
            try:
                pid = int(lock.read_text().strip())
                os.kill(pid, 0)  # raises if the process is gone
            except (ValueError, OSError):
                lock.unlink(missing_ok=True)  # stale lock
            else:
                if pid != os.getpid():
                    raise LedgerLocked(f"ledger in use by pid {pid}")
        lock.write_text(str(os.getpid()))

    def _release_lock(self) -> None:
        lock = self._dir / LOCK_FILE
        try:
            if lock.exists() and lock.read_text().strip() == str(os.getpid()):
                lock.unlink()
        except OSError:
            pass

    # -- genesis and replay ---------------------------------------------

    def _genesis_block(self) -> Block:
        """Block 0: an engine-built config transaction, exempt from policy."""
        config = self.genesis
        proposal = TxProposal(
            invoker=ZERO_ADDRESS,
            invoker_key=bytes(32),
            contract="config",
            function="genesis",
            args=[canonical_json(config.to_dict()).decode("utf-8")],
            nonce=bytes(32),
            timestamp=int(self.clock.now()),
        )
        roster = {p.peer_id: p.keypair.public_key.hex() for p in config.peers}
        rwset = ReadWriteSet(writes=[
            (KEY_CONFIG + "registrars", canonical_json(config.registrar_addresses())),
            (KEY_CONFIG + "peers", canonical_json(roster)),
            (KEY_CONFIG + "policy", canonical_json({
                "maxBlockTxs": config.max_block_txs,
                "threshold": config.effective_threshold(),
            })),
        ])
        tx = Transaction(proposal=proposal, rwset=rwset, endorsements=[])
        block = Block(number=0, prev_hash=ZERO_HASH,
                      data_hash=Block.compute_data_hash([tx]), transactions=[tx],
                      validation_flags=[VALID])
        return block

    def _write_genesis(self) -> None:
        self.commit_block(self._genesis_block())

    def _replay(self) -> None:
        """Rebuild height, tip hash, and world state from the journal."""
        path = self._dir / BLOCKS_FILE
        if not path.exists():
            return
        for number, raw in enumerate(path.read_bytes().split(b"\n")):
            if not raw.strip():
                continue
            try:
                block = Block.from_dict(json.loads(raw.decode("utf-8")))
            except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
                    ValueError, TypeError) as exc:
                raise LedgerError(
                    f"corrupt journal at block {number}: {exc}") from exc
            self._apply_block(block)

    def _apply_block(self, block: Block) -> None:
        for idx, (tx, flag) in enumerate(zip(block.transactions,
                                             block.validation_flags)):
            if flag == VALID:
                self.state.apply(tx.rwset.writes, (block.number, idx))
        self._height = block.number + 1
        self._tip_hash = block.header_hash()

    # -- execution -------------------------------------------------------

    def execute_proposal(self, proposal: TxProposal) -> tuple[ReadWriteSet, bytes]:
        """Run the named contract function against the committed snapshot.

        Pure: identical snapshot and proposal always yield an identical
        rwset. The execution harness brackets the call with nonce replay
        protection (a read+write of the invoker's nonce key), so replays
        fail here and same-block duplicates fall out of MVCC.
        """
        if derive_address(proposal.invoker_key) != proposal.invoker:
            raise InvalidProposalSignature("invoker key does not match invoker address")
        if not verify_signature(proposal.invoker_key, proposal.signing_bytes(),
                                proposal.signature):
            raise InvalidProposalSignature("proposal signature invalid")
        contract = self.contracts.get(proposal.contract)
        if contract is None:
            raise UnknownContract(proposal.contract)
        ctx = TxContext(self.state, self.store, proposal)
        nonce_key = f"{KEY_NONCE}{proposal.invoker}/{proposal.nonce.hex()}"
        if ctx.get(nonce_key) is not None:
            raise ContractError("NonceReplayed",
                                f"nonce already used by {proposal.invoker}")
        response = contract.invoke(ctx, proposal.function, proposal.args)
        ctx.put(nonce_key, b"\x01")
        return ctx.rwset(), response

    def endorse(self, peer_id: str, proposal: TxProposal,
                rwset: ReadWriteSet) -> Endorsement:
        """Peer re-executes the proposal and signs the tx hash on agreement."""
        keypair = self._peers.get(peer_id)
        if keypair is None:
            raise UnknownPeer(peer_id)
        re_rwset, _ = self.execute_proposal(proposal)
        if re_rwset.canonical_bytes() != rwset.canonical_bytes():
            raise RwsetMismatch(f"peer {peer_id} computed a different rwset")
        return Endorsement(peer_id=peer_id,
                           signature=keypair.sign(transaction_hash(proposal, rwset)))

    def build_transaction(self, proposal: TxProposal) -> Transaction:
        """Execute and collect endorsements from the full roster."""
        rwset, _ = self.execute_proposal(proposal)
        endorsements = [self.endorse(pid, proposal, rwset) for pid in self._peers]
        return Transaction(proposal=proposal, rwset=rwset, endorsements=endorsements)

    # -- ordering ----------------------------------------------------------

    def order_batch(self, transactions: list[Transaction]) -> Block:
        """Solo ordering: arrival order, hashes filled, flags unset."""
        if not transactions:
            raise EmptyBatch("no transactions to order")
        return Block(
            number=self._height,
            prev_hash=self._tip_hash,
            data_hash=Block.compute_data_hash(transactions),
            transactions=list(transactions),
        )

    # -- validation ---------------------------------------------------------

    def _endorsements_satisfy_policy(self, tx: Transaction) -> bool:
        tx_hash = tx.tx_id
        valid_peers = set()
        for end in tx.endorsements:
            key = self.policy.roster.get(end.peer_id)
            if key is not None and verify_signature(key, tx_hash, end.signature):
                valid_peers.add(end.peer_id)
        return len(valid_peers) >= self.policy.threshold

    def validate_block(self, block: Block) -> list[str]:
        """Flag each transaction: policy first, then MVCC, else VALID.

        Pure with respect to the committed state; earlier VALID writes in
        the same block are visible to later MVCC checks via an overlay.
        """
        flags: list[str] = []
        overlay: dict[str, Version | None] = {}
        for idx, tx in enumerate(block.transactions):
            if not self._endorsements_satisfy_policy(tx):
                flags.append(POLICY_FAILURE)
                continue
            conflict = False
            for key, seen_version in tx.rwset.reads:
                if key in overlay:
                    current = overlay[key]
                else:
                    entry = self.state.get(key)
                    current = entry[1] if entry is not None else None
                if current != seen_version:
                    conflict = True
                    break
            if conflict:
                flags.append(MVCC_CONFLICT)
                continue
            flags.append(VALID)
            for key, value in tx.rwset.writes:
                overlay[key] = (block.number, idx) if value is not None else None
        return flags

    # -- commitment -----------------------------------------------------------

    def commit_block(self, block: Block) -> Block:
        """Append the validated block and apply its VALID writes."""
        if block.validation_flags is None:
            raise LedgerError("block must be validated before commit")
        if len(block.validation_flags) != len(block.transactions):
            raise LedgerError("one flag per transaction required")
        if block.number != self._height:
            raise NonSequentialBlock(
                f"expected block {self._height}, got {block.number}")
        if block.prev_hash != self._tip_hash:
            raise NonSequentialBlock("block does not extend the current tip")
        self.clock.advance(self.commit_tick)
        with open(self._dir / BLOCKS_FILE, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(block.to_dict()).decode("utf-8") + "\n")
        self._apply_block(block)
        commit_time = self.clock.now()
        by_id = {t.tx_id: f for t, f in zip(block.transactions,
                                            block.validation_flags)}
        for timing in self._timings:
            if timing.commit_time is None and timing.tx_id in by_id:
                timing.commit_time = commit_time
                timing.flag = by_id[timing.tx_id]
        return block

    # -- submission pipeline ------------------------------------------------

    def submit(self, proposal: TxProposal) -> bytes:
        """Execute, endorse, and queue; cuts a block when the batch fills."""
        submit_time = self.clock.now()
        tx = self.build_transaction(proposal)
        self._pending.append(tx)
        self._timings.append(TxTimings(tx_id=tx.tx_id, submit_time=submit_time))
        if self._pending_since is None:
            self._pending_since = submit_time
        if len(self._pending) >= self.genesis.max_block_txs:
            self.commit_pending()
        return tx.tx_id

    def tick(self) -> Block | None:
        """Cut on timeout: commit pending txs older than the batch timeout."""
        if self._pending and self._pending_since is not None:
            if self.clock.now() - self._pending_since >= self.genesis.batch_timeout:
                return self.commit_pending()
        return None

    def flush(self) -> Block | None:
        """Force-cut whatever is pending."""
        if not self._pending:
            return None
        return self.commit_pending()

    def commit_pending(self) -> Block:
        block = self.order_batch(self._pending)
        self._pending = []
        self._pending_since = None
        block.validation_flags = self.validate_block(block)
        return self.commit_block(block)

    # -- queries ---------------------------------------------------------------

    @property
    def height(self) -> int:
        return self._height

    def query_state(self, key: str) -> tuple[bytes, Version] | None:
        return self.state.get(key)

    def query_range(self, prefix: str) -> list[tuple[str, bytes, Version]]:
        return self.state.range(prefix)

    def tx_flag(self, tx_id: bytes) -> str | None:
        for timing in self._timings:
            if timing.tx_id == tx_id:
                return timing.flag
        return None

    def block_number_of(self, tx_id: bytes) -> int | None:
        """Scan the journal for the block containing tx_id."""
        for block in self.read_blocks():
            for tx in block.transactions:
                if tx.tx_id == tx_id:
                    return block.number
        return None

    def read_blocks(self) -> list[Block]:
        path = self._dir / BLOCKS_FILE
        if not path.exists():
            return []
        blocks = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    blocks.append(Block.from_dict(json.loads(line)))
        return blocks

    # -- integrity ---------------------------------------------------------------

    def verify_chain(self) -> ChainReport:
        """Recompute every hash and link over the persisted journal."""
        return verify_chain_file(self._dir / BLOCKS_FILE)

    # -- metrics ---------------------------------------------------------------

    def timings_mark(self) -> int:
        """Marker for metrics windows (e.g. a benchmark run)."""
        return len(self._timings)

    def metrics(self, since: int = 0) -> MetricsReport:
        """Throughput and latency over committed VALID transactions.

        Throughput is VALID transactions divided by the clock span between
        the first submission and the last commit in the window.
        """
        window = [t for t in self._timings[since:]
                  if t.flag == VALID and t.commit_time is not None]
        if not window:
            return MetricsReport(0, 0.0, 0.0, 0.0, 0.0)
        latencies = sorted(t.commit_time - t.submit_time for t in window)
        span = max(t.commit_time for t in window) - min(t.submit_time for t in window)
        count = len(window)
        throughput = count / span if span > 0 else float(count)
        p95_index = min(count - 1, max(0, -(-95 * count // 100) - 1))
        return MetricsReport(
            committed_tx_count=count,
            throughput_tx_per_sec=throughput,
            latency_min=latencies[0],
            latency_mean=mean(latencies),
            latency_p95=latencies[p95_index],
        )


def _check_block(block: Block, index: int, prev_header_hash: bytes) -> str | None:
    if block.number != index:
        return f"block number {block.number} at position {index}"
    if block.validation_flags is None or \
            len(block.validation_flags) != len(block.transactions):
        return "flag count does not match transaction count"
    if any(f not in FLAG_VALUES for f in block.validation_flags):
        return "unknown validation flag"
    if block.prev_hash != prev_header_hash:
        return "previous-hash link broken"
    if block.data_hash != Block.compute_data_hash(block.transactions):
        return "data hash does not match transactions"
    return None


def verify_chain_file(path: str | Path) -> ChainReport:
    """Recompute every hash and link over a persisted journal file.

    Works directly on the raw bytes, without replaying state, so it stays
    usable on a journal too damaged to open; reports the first bad block.
    """
    path = Path(path)
    if not path.exists():
        return ChainReport(ok=False, height=0, bad_block=0, reason="no journal file")
    raw_lines = path.read_bytes().split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()  # the journal ends with one newline
    prev_header_hash = ZERO_HASH
    count = 0
    for index, raw in enumerate(raw_lines):
        try:
            block = Block.from_dict(json.loads(raw.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError,
                TypeError):
            return ChainReport(ok=False, height=count, bad_block=index,
                               reason="undecodable block")
        # the journal is written canonically, so any surviving byte change
        # in derived fields (txId, flagsHash, hex case) shows up as a
        # re-encoding mismatch even when parsing succeeded
        if canonical_json(block.to_dict()) != raw:
            return ChainReport(ok=False, height=count, bad_block=index,
                               reason="non-canonical block encoding")
        problem = _check_block(block, index, prev_header_hash)
        if problem is not None:
            return ChainReport(ok=False, height=count, bad_block=index,
                               reason=problem)
        prev_header_hash = block.header_hash()
        count += 1
    if count == 0:
        return ChainReport(ok=False, height=0, bad_block=0, reason="empty chain")
    return ChainReport(ok=True, height=count)
