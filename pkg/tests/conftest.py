"""Shared fixtures for the sccv test suite."""
import numpy as np
import pytest

from sccv.core import SyscallTable, default_table, parse_syscall_table


@pytest.fixture(scope="session")
def table() -> SyscallTable:
    return default_table()


@pytest.fixture(scope="session")
def tiny_table() -> SyscallTable:
    """The six-call table from the worked aggregation example."""
    names = ["exit", "fork", "read", "write", "open", "close"]
    text = "".join(f"{i} {n}\n" for i, n in enumerate(names))
    return parse_syscall_table(text)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
