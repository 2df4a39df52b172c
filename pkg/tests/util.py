"""Shared test plumbing: deterministic principals and submission helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from iotid.clock import Clock, SimClock
from iotid.did import (
    Address,
    Did,
    KeyPair,
    derive_address,
    generate_keypair,
    make_did,
    make_possession_proof,
)
from iotid.gateway import default_contracts
from iotid.ledger import Contract, GenesisConfig, LedgerEngine, TxContext, TxProposal
from iotid.store import ContentStore

MANUFACTURER = "ABCDEF00001"


def seeded_keypair(n: int) -> KeyPair:
    return generate_keypair(bytes([n]) * 32)


@dataclass
class Principal:
    """A signing identity with its own monotonic nonce counter."""

    keypair: KeyPair
    method_id: str | None = None
    _nonce: int = field(default=0, repr=False)

    @classmethod
    def from_seed(cls, n: int, method_id: str | None = None) -> "Principal":
        return cls(keypair=seeded_keypair(n), method_id=method_id)

    @property
    def public_key(self) -> bytes:
        return self.keypair.public_key

    @property
    def address(self) -> Address:
        return derive_address(self.public_key)

    @property
    def did(self) -> Did:
        return make_did(self.public_key, method_id=self.method_id)

    def proposal(self, engine: LedgerEngine, contract: str, function: str,
                 args: list[str]) -> TxProposal:
        self._nonce += 1
        return TxProposal(
            invoker=self.address,
            invoker_key=self.public_key,
            contract=contract,
            function=function,
            args=args,
            nonce=self._nonce.to_bytes(32, "big"),
            timestamp=int(engine.clock.now()),
        ).sign(self.keypair)


class KvContract:
    """Minimal contract for engine-level tests: counters under ``kv/``."""

    name = "kv"

    def invoke(self, ctx: TxContext, function: str, args: list[str]) -> bytes:
        if function == "set":
            ctx.put(f"kv/{args[0]}", args[1].encode("utf-8"))
            return b"ok"
        if function == "bump":
            current = ctx.get(f"kv/{args[0]}")
            value = int(current or b"0") + 1
            ctx.put(f"kv/{args[0]}", str(value).encode("utf-8"))
            return str(value).encode("utf-8")
        if function == "read":
            return ctx.get(f"kv/{args[0]}") or b""
        raise AssertionError(f"unknown kv function {function}")


def make_engine(base: Path, clock: Clock | None = None,
                genesis: GenesisConfig | None = None) -> LedgerEngine:
    """Fresh ledger on a simulated clock with the standard contracts + kv."""
    clock = clock if clock is not None else SimClock()
    contracts: dict[str, Contract] = dict(default_contracts())
    contracts["kv"] = KvContract()
    return LedgerEngine.create(
        base / "ledger", genesis or GenesisConfig.default(),
        ContentStore(base / "objects"), contracts,
        clock=clock, commit_tick=1.0 if isinstance(clock, SimClock) else 0.0)


def reopen_engine(base: Path, clock: Clock | None = None) -> LedgerEngine:
    clock = clock if clock is not None else SimClock()
    contracts: dict[str, Contract] = dict(default_contracts())
    contracts["kv"] = KvContract()
    return LedgerEngine.open(
        base / "ledger", ContentStore(base / "objects"), contracts,
        clock=clock, commit_tick=1.0 if isinstance(clock, SimClock) else 0.0)


def registrar_principal(engine: LedgerEngine) -> Principal:
    return Principal(keypair=engine.genesis.registrars[0].keypair)


def create_identity(engine: LedgerEngine, registrar: Principal,
                    device: Principal, owner: Address | None = None,
                    flush: bool = True) -> bytes:
    """Submit createIdentity for ``device``; returns the txId."""
    owner = owner if owner is not None else device.address
    proof = make_possession_proof(device.keypair, device.did, owner)
    tx_id = engine.submit(registrar.proposal(
        engine, "idm", "createIdentity",
        [device.public_key.hex(), device.did.method_id, str(owner), proof.hex()]))
    if flush:
        engine.flush()
    return tx_id


def register_device(engine: LedgerEngine, registrar: Principal,
                    device: Principal, manufacturer: str = MANUFACTURER) -> bytes:
    """Full two-step creation + registration; returns the second txId."""
    create_identity(engine, registrar, device)
    tx_id = engine.submit(device.proposal(
        engine, "idm", "registerDevice", [str(device.did), manufacturer]))
    engine.flush()
    return tx_id


def upload_payload(engine: LedgerEngine, device: Principal, payload: bytes,
                   name: str = "reading.txt", flush: bool = True) -> bytes:
    tx_id = engine.submit(device.proposal(
        engine, "asset", "uploadAsset",
        [str(device.did), name, payload.hex()]))
    if flush:
        engine.flush()
    return tx_id


def state_snapshot(engine: LedgerEngine) -> dict:
    return {k: (v, ver) for k, v, ver in engine.state.range("")}
