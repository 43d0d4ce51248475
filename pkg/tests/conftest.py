import itertools

import numpy as np
import pytest


def direct_conv(x, kernel, bias, stride, pad):
    """Nested-loop cross-correlation; independent of the tap-wise implementation."""
    dims = x.ndim - 1
    stride = (stride,) * dims if np.isscalar(stride) else stride
    pad = (pad,) * dims if np.isscalar(pad) else pad
    xp = np.pad(x, [(0, 0)] + [(p, p) for p in pad])
    ks = kernel.shape[2:]
    out_shape = [(x.shape[1 + a] + 2 * pad[a] - ks[a]) // stride[a] + 1 for a in range(dims)]
    out = np.zeros([kernel.shape[0]] + out_shape)
    for co in range(kernel.shape[0]):
        for pos in itertools.product(*(range(n) for n in out_shape)):
            acc = 0.0
            for ci in range(x.shape[0]):
                for off in itertools.product(*(range(k) for k in ks)):
                    src = tuple(p * s + o for p, s, o in zip(pos, stride, off))
                    acc += xp[(ci,) + src] * kernel[(co, ci) + off]
            out[(co,) + pos] = acc + (0.0 if bias is None else bias[co])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the end-of-run summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, title: str, checks: list[tuple[str, bool]]):
        ok = all(passed for _, passed in checks)
        failed = [name for name, passed in checks if not passed]
        detail = "; ".join(name for name, _ in checks) if ok else "failed: " + "; ".join(failed)
        lines[number] = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
