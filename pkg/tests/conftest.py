import numpy as np

from camattn.tensor import Tensor

# one-line verdicts collected by the acceptance checks, echoed after the run
ACCEPTANCE_VERDICTS: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


def fd_gradient(fn, value: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued ``fn`` at ``value``."""
    value = np.asarray(value, dtype=np.float64)
    grad = np.zeros_like(value)
    flat = value.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(value)
        flat[i] = orig - eps
        lo = fn(value)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return grad


def backward_gradient(fn, value: np.ndarray) -> np.ndarray:
    """Tape gradient of scalar ``fn`` (built from Tensor ops) at ``value``."""
    t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    fn(t).backward()
    return t.grad


def check_grad(fn_np, fn_tensor, value, atol=1e-7, rtol=1e-5):
    """Compare tape gradients against central differences."""
    num = fd_gradient(fn_np, value)
    ana = backward_gradient(fn_tensor, value)
    np.testing.assert_allclose(ana, num, atol=atol, rtol=rtol)
