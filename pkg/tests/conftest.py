import pytest

from iotid.clock import SimClock

from util import Principal, make_engine, registrar_principal


@pytest.fixture
def clock():
    return SimClock()


@pytest.fixture
def engine(tmp_path, clock):
    eng = make_engine(tmp_path, clock)
    yield eng
    eng.close()


@pytest.fixture
def registrar(engine):
    return registrar_principal(engine)


@pytest.fixture
def device():
    return Principal.from_seed(1)


@pytest.fixture
def other_device():
    return Principal.from_seed(2)
