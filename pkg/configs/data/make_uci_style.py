"""Regenerate uci_style.csv (deterministic; committed output should not drift).

Run from the repository root: python3 configs/data/make_uci_style.py
"""

from pathlib import Path

import numpy as np

from ddgp import data, rng


def main() -> None:
    r = rng.numpy_rng(2024, rng.DOMAIN_INIT, 77)
    n, d = 512, 8
    x = r.normal(size=(n, d))
    y = (np.sin(2.0 * x[:, 0]) + 0.5 * x[:, 1] * x[:, 2]
         + np.exp(-x[:, 3] ** 2) + 0.3 * np.tanh(x[:, 4] + x[:, 5])
         + 0.1 * x[:, 6] ** 2 - 0.2 * x[:, 7]
         + 0.05 * r.normal(size=n))
    out = Path(__file__).parent / "uci_style.csv"
    data.write_csv(out, [f"x{i}" for i in range(d)] + ["y"],
                   [x[:, i] for i in range(d)] + [y])
    print(f"wrote {out} ({n} rows)")


if __name__ == "__main__":
    main()
