import random
import socket

import pytest


def find_port_base(count: int, tries: int = 50) -> int:
    """A base such that `count` consecutive loopback ports look free."""
    for _ in range(tries):
        base = random.randrange(20000, 55000)
        ok = True
        for c in range(count):
            with socket.socket() as s:
                try:
                    s.bind(("127.0.0.1", base + c))
                except OSError:
                    ok = False
                    break
        if ok:
            return base
    raise RuntimeError("no free port range found")


@pytest.fixture
def port_base():
    return find_port_base(16)
