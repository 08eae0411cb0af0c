"""MFPCA of the bivariate Canadian weather data.

Expects ``temperature.csv`` and ``precipitation.csv`` in the given
directory, one station per row with the station name in the first column.
Writes eigenvalues and the plots of the first component's curves.

    python3 scripts/weather_mfpca.py path/to/weather --out results/
"""

import argparse
from pathlib import Path

import numpy as np

from fundata import DenseFD, MultivariateFD, mfpca_fit, read_csv_dense
from fundata.io import atomic_write_text, write_array_csv
from fundata.plot import plot_curves


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory")
    parser.add_argument("--n-comp", type=float, nargs=2, default=[0.99, 0.99])
    parser.add_argument("--cov", choices=("raw", "diagonal", "all"), default="all",
                        help="raw covariance, smoothed diagonal only, or smoothed surface")
    parser.add_argument("--out", default="weather_results")
    args = parser.parse_args()

    src = Path(args.directory)
    temp = read_csv_dense(src / "temperature.csv", index_col=0)
    prec = read_csv_dense(src / "precipitation.csv", index_col=0)
    data = MultivariateFD([temp, prec])
    if args.cov == "raw":
        model = mfpca_fit(data, list(args.n_comp), smooth_cov=False)
    else:
        model = mfpca_fit(data, list(args.n_comp), smooth_cov=True, cov_fill=args.cov)

    np.set_printoptions(precision=3)
    print("univariate components:", [c.n_components for c in model.components])
    print("eigenvalues:", model.eigenvalues)
    print("lambda1/lambda2:", model.eigenvalues[0] / model.eigenvalues[1])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_array_csv(out / "eigenvalues.csv", model.eigenvalues[:, None], header=["eigenvalue"])
    write_array_csv(out / "scores.csv", model.scores)
    for p, (name, comp) in enumerate(zip(("temperature", "precipitation"), data)):
        atomic_write_text(out / f"{name}.svg", plot_curves(comp, title=name, xlabel="day"))
        funcs = DenseFD({"day": comp.grids[0]}, model.eigenfunctions[p])
        atomic_write_text(out / f"{name}_eigenfunctions.svg",
                          plot_curves(funcs, title=f"{name} eigenfunctions", xlabel="day"))


if __name__ == "__main__":
    main()
