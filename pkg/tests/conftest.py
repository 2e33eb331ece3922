import numpy as np
import pytest

from proxpan.model import AnalysisBanks, FeatureTriple, FusionPair, SynthesisBanks


def naive_conv(x, w):
    """Quadruple-loop zero-padded cross-correlation, independent of the library path."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    h, wd, cin = x.shape
    s, _, _, cout = w.shape
    top = (s - 1) // 2
    out = np.zeros((h, wd, cout))
    for i in range(h):
        for j in range(wd):
            for o in range(cout):
                acc = 0.0
                for a in range(s):
                    for b in range(s):
                        ii, jj = i + a - top, j + b - top
                        if 0 <= ii < h and 0 <= jj < wd:
                            for c in range(cin):
                                acc += x[ii, jj, c] * w[a, b, c, o]
                out[i, j, o] = acc
    return out


def random_banks(rng, k=3, s=3, bands=2, scale=0.3):
    def bank(cout):
        return scale * rng.standard_normal((s, s, k, cout))

    return AnalysisBanks(bank(1), bank(1), bank(bands), bank(bands))


def random_synthesis(rng, k=3, s=3, bands=2, scale=0.3):
    return SynthesisBanks(*(scale * rng.standard_normal((s, s, k, bands)) for _ in range(3)))


def random_features(rng, h=6, w=5, k=3):
    return FeatureTriple(*(rng.standard_normal((h, w, k)) for _ in range(3)))


def random_pair(rng, h=6, w=5, bands=2):
    return FusionPair(rng.standard_normal((h, w, 1)), rng.standard_normal((h, w, bands)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# (criterion number, text) per acceptance check, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
            terminalreporter.write_line(line)
