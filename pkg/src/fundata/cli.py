"""Command line front end: ``fundata <subcommand> [flags]``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors;
errors are reported on stderr as a single ``fundata: error: ...`` line.
The default seed comes from the ``FUNDATA_SEED`` environment variable
(0 when unset).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io as fio
from .core import DenseFD, IrregularFD, MultivariateFD, to_dense, to_irregular
from .fcubt import FcubtConfig, export_tree, grow
from .fpca import load_model, mfpca_fit, save_model
from .moments import estimate_covariance, estimate_mean
from .plot import plot_curves, plot_image
from .simulation import (
    BASIS_NAMES, ClusterSpec, DECAY_KINDS, add_noise, make_basis, simulate_brownian,
    simulate_kl, sparsify, tensor_basis_2d,
)
from .smoothing import KERNELS, Smoother, smooth_fd


class UsageError(Exception):
    pass


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` with inclusive endpoints."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be start:stop:count, got {text!r}") from None
    if count < 1 or (count > 1 and not stop > start):
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}")
    return np.linspace(start, stop, count)


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ','."""
    try:
        return np.array([[float(x) for x in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid matrix {text!r}") from None


def parse_n_comp(text: str) -> List[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid n-comp {text!r}") from None
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("n-comp entries must be positive")
    return [int(v) if v >= 1 else v for v in vals]


def default_seed() -> int:
    text = os.environ.get("FUNDATA_SEED")
    if text is None or text == "":
        return 0
    try:
        seed = int(text)
    except ValueError:
        raise UsageError(f"FUNDATA_SEED must be a non-negative integer, got {text!r}") from None
    if seed < 0:
        raise UsageError("FUNDATA_SEED must be a non-negative integer")
    return seed


def read_data(path: str, irregular: bool = False, index_col: Optional[int] = None):
    """CSV, ts or manifest input; returns (data, labels or None)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return fio.read_manifest(path), None
    if suffix == ".ts":
        return fio.read_ts(path)
    reader = fio.read_csv_irregular if irregular else fio.read_csv_dense
    return reader(path, index_col=index_col), None


def write_data(fd, path: str) -> None:
    """Manifest for multivariate or 2-D data (``.json``), CSV otherwise."""
    if Path(path).suffix.lower() == ".json":
        fio.write_manifest(fd, path)
        return
    if isinstance(fd, MultivariateFD):
        if len(fd) != 1:
            raise UsageError("multivariate output needs a .json manifest path")
        fd = fd[0]
    if fd.n_dim == 2:
        raise UsageError("two-dimensional output needs a .json manifest path")
    fio.write_csv(fd, path)


def _single(fd, what: str):
    if isinstance(fd, MultivariateFD):
        if len(fd) != 1:
            raise UsageError(f"{what} works on a single component")
        return fd[0]
    return fd


def _sibling(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}_{suffix}"))


def cmd_simulate(args) -> None:
    seeds = np.random.SeedSequence(args.seed).spawn(3)
    if args.process == "kl":
        basis = make_basis(args.basis, args.n_functions, args.grid)
        if args.basis2 is not None:
            basis = tensor_basis_2d(
                basis, make_basis(args.basis2, args.n_functions2 or args.n_functions, args.grid2)
            )
        if args.centers is not None:
            centers = args.centers
            if args.cluster_std in DECAY_KINDS:
                spec = ClusterSpec.from_decay(centers, args.cluster_std)
            else:
                spec = ClusterSpec(centers, parse_matrix(args.cluster_std))
            sim = simulate_kl(basis, spec, args.n_obs, seed=seeds[0])
        else:
            sim = simulate_kl(basis, args.decay, args.n_obs, seed=seeds[0])
    else:
        sim = simulate_brownian(
            args.kind, args.n_obs, args.grid, hurst=args.hurst, drift=args.drift,
            sigma=args.sigma, x0=args.x0, seed=seeds[0],
        )
    out = sim.data
    if args.noise is not None:
        add_noise(sim, args.noise, seed=seeds[1])
        out = sim.noisy_data
    if args.sparsify is not None:
        if args.noise is not None:
            sim.data = sim.noisy_data
        sparsify(sim, args.sparsify, args.epsilon, seed=seeds[2])
        out = sim.sparse_data
    write_data(out, args.output)
    if sim.labels is not None:
        labels_path = args.labels or _sibling(args.output, "labels.csv")
        fio.write_array_csv(labels_path, sim.labels[:, None], header=["label"])


def _smoother(args) -> Smoother:
    return Smoother(
        degree=args.degree, kernel=args.kernel, bandwidth=args.bandwidth,
        method=args.method, point=args.point, neighborhood=args.neighborhood,
    )


def cmd_smooth(args) -> None:
    fd, _ = read_data(args.input, args.irregular, args.index_col)
    fd = _single(fd, "smooth")
    out = smooth_fd(fd, _smoother(args), output_grid=args.output_grid)
    fio.write_csv(out, args.output)


def cmd_moments(args) -> None:
    fd, _ = read_data(args.input, args.irregular, args.index_col)
    fd = _single(fd, "moments")
    smoother = _smoother(args) if args.presmooth else None
    mean = estimate_mean(fd, smoother)
    fio.write_csv(mean, args.mean)
    if args.cov:
        cov = estimate_covariance(fd, smoother, smooth=args.smooth_cov)
        header = [fio.format_float(x) for x in cov.grid_t]
        fio.write_array_csv(args.cov, cov.values, header=header)
        if cov.noise_variance is not None:
            print(f"noise_variance,{fio.format_float(cov.noise_variance)}")


def _relative_error(data: MultivariateFD, recon: MultivariateFD) -> float:
    num = den = 0.0
    for a, b in zip(data, recon):
        x = a.values if isinstance(a, DenseFD) else to_dense(a).values
        mean = np.nanmean(x, axis=0)
        num += float(np.nansum((x - b.values) ** 2)) if x.shape == b.values.shape else np.nan
        den += float(np.nansum((x - mean) ** 2))
    return num / den if den > 0 else 0.0


def cmd_fpca(args) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.inverse is not None:
        if args.model is None:
            raise UsageError("--inverse needs --model")
        model = load_model(args.model)
        scores = fio.read_array_csv(args.inverse)
        write_data(model.inverse_transform(scores), str(out / args.inverse_name))
        return
    data, _ = read_data(args.input, args.irregular, args.index_col)
    data = data if isinstance(data, MultivariateFD) else MultivariateFD([data])
    if args.model is not None:
        model = load_model(args.model)
    else:
        n_comp = args.n_comp if len(args.n_comp) > 1 else args.n_comp[0]
        model = mfpca_fit(data, n_comp, method=args.method)
        save_model(model, out / "model.json")
        fio.write_array_csv(out / "eigenvalues.csv", model.eigenvalues[:, None],
                            header=["eigenvalue"])
        for p, funcs in enumerate(model.eigenfunctions):
            fio.write_array_csv(out / f"eigenfunctions_{p}.csv", funcs.reshape(funcs.shape[0], -1))
    scores = model.transform(data)
    fio.write_array_csv(out / "scores.csv", scores)
    err = _relative_error(data, model.inverse_transform(scores))
    print(f"relative_reconstruction_error,{fio.format_float(err)}")


def cmd_fcubt(args) -> None:
    data, _ = read_data(args.input, args.irregular, args.index_col)
    n_comp = args.n_comp if len(args.n_comp) > 1 else args.n_comp[0]
    config = FcubtConfig(n_comp=n_comp, min_size=args.min_size, k_max=args.k_max,
                         method=args.method, seed=args.seed)
    tree = grow(data, config)
    if args.join is not None:
        join_comp = args.join if len(args.join) > 1 else args.join[0]
        tree.join(data, join_comp)
    fio.write_array_csv(args.output, tree.labels[:, None], header=["label"])
    if args.tree:
        fio.atomic_write_text(args.tree, export_tree(tree, "json"))
    if args.dot:
        fio.atomic_write_text(args.dot, export_tree(tree, "dot"))
    if args.predict:
        new, _ = read_data(args.predict, args.irregular, args.index_col)
        path = args.predict_output or _sibling(args.output, "predicted.csv")
        fio.write_array_csv(path, tree.predict(new)[:, None], header=["label"])


def cmd_plot(args) -> None:
    data, ts_labels = read_data(args.input, args.irregular, args.index_col)
    if isinstance(data, MultivariateFD):
        if not 0 <= args.component < len(data):
            raise UsageError(f"--component must lie in 0..{len(data) - 1}")
        data = data[args.component]
    labels = ts_labels
    if args.labels:
        labels = [int(x) for x in fio.read_array_csv(args.labels)[:, 0]]
    if data.n_dim == 2:
        svg = plot_image(data, args.obs, args.title, args.xlabel, args.ylabel)
    else:
        svg = plot_curves(data, labels, args.title, args.xlabel, args.ylabel)
    fio.atomic_write_text(args.output, svg)


def cmd_convert(args) -> None:
    data, labels = read_data(args.input, args.irregular, args.index_col)
    if args.to == "irregular":
        data = to_irregular(_single(data, "convert"))
    elif args.to == "dense":
        data = _single(data, "convert")
        data = to_dense(data) if isinstance(data, IrregularFD) else data
    if Path(args.output).suffix.lower() == ".ts":
        if isinstance(data, IrregularFD):
            data = to_dense(data)
        if args.labels:
            labels = [str(int(x)) for x in fio.read_array_csv(args.labels)[:, 0]]
        fio.write_ts(data, args.output, labels=labels)
    else:
        write_data(data, args.output)
        if labels is not None:
            text = "label\n" + "".join(f"{x}\n" for x in labels)
            fio.atomic_write_text(_sibling(args.output, "labels.csv"), text)


def _add_input(p) -> None:
    p.add_argument("input", help="CSV, .ts or .json manifest")
    p.add_argument("--irregular", action="store_true", help="read CSV as irregular data")
    p.add_argument("--index-col", type=int, default=None, help="skip a leading index column")


def _add_smoother(p) -> None:
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--method", choices=("cv", "knn"), default="cv")
    p.add_argument("--point", type=float, default=0.5)
    p.add_argument("--neighborhood", type=int, default=2)


def build_parser(seed: int) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fundata", description="Functional data toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate functional data")
    p.add_argument("process", choices=("kl", "brownian"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n-obs", type=int, default=100)
    p.add_argument("--grid", type=parse_grid, default=parse_grid("0:1:101"))
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--basis", choices=BASIS_NAMES, default="wiener")
    p.add_argument("--n-functions", type=int, default=5)
    p.add_argument("--decay", choices=DECAY_KINDS, default="exponential")
    p.add_argument("--basis2", choices=BASIS_NAMES, default=None,
                   help="second basis for tensor-product (image) data")
    p.add_argument("--n-functions2", type=int, default=None)
    p.add_argument("--grid2", type=parse_grid, default=parse_grid("0:1:51"))
    p.add_argument("--centers", type=parse_matrix, default=None,
                   help="(J, K) cluster centres, rows ';'-separated")
    p.add_argument("--cluster-std", default="exponential",
                   help="(J, K) matrix or a decay name")
    p.add_argument("--labels", default=None, help="labels CSV path")
    p.add_argument("--kind", choices=("standard", "fractional", "geometric"), default="standard")
    p.add_argument("--hurst", type=float, default=0.5)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=None, help="noise variance")
    p.add_argument("--sparsify", type=float, default=None, help="fraction of points removed")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("smooth", help="local polynomial smoothing")
    _add_input(p)
    _add_smoother(p)
    p.add_argument("--output-grid", type=parse_grid, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("moments", help="mean and covariance estimation")
    _add_input(p)
    _add_smoother(p)
    p.add_argument("--presmooth", action="store_true", help="smooth curves before averaging")
    p.add_argument("--smooth-cov", action="store_true", help="smooth the covariance surface")
    p.add_argument("--mean", required=True, help="mean CSV path")
    p.add_argument("--cov", default=None, help="covariance CSV path")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("fpca", help="univariate/multivariate FPCA")
    p.add_argument("input", nargs="?", default=None)
    p.add_argument("--irregular", action="store_true")
    p.add_argument("--index-col", type=int, default=None)
    p.add_argument("--n-comp", type=parse_n_comp, default=[0.99])
    p.add_argument("--method", choices=("NumInt", "PACE"), default="NumInt")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model", default=None, help="apply a stored model instead of fitting")
    p.add_argument("--inverse", default=None, help="scores CSV to reconstruct (needs --model)")
    p.add_argument("--inverse-name", default="reconstruction.json")
    p.set_defaults(func=cmd_fpca)

    p = sub.add_parser("fcubt", help="clustering with unsupervised binary trees")
    _add_input(p)
    p.add_argument("--n-comp", type=parse_n_comp, default=[0.95])
    p.add_argument("--min-size", type=int, default=10)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--method", choices=("NumInt", "PACE"), default="NumInt")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--join", type=parse_n_comp, default=None,
                   help="run the joining step with this n-comp")
    p.add_argument("-o", "--output", required=True, help="labels CSV path")
    p.add_argument("--tree", default=None, help="tree JSON path")
    p.add_argument("--dot", default=None, help="tree dot path")
    p.add_argument("--predict", default=None, help="data to label with the grown tree")
    p.add_argument("--predict-output", default=None)
    p.set_defaults(func=cmd_fcubt)

    p = sub.add_parser("plot", help="write an SVG plot")
    _add_input(p)
    p.add_argument("--labels", default=None, help="labels CSV (one column)")
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--obs", type=int, default=0, help="observation shown for image data")
    p.add_argument("--title", default="")
    p.add_argument("--xlabel", default="")
    p.add_argument("--ylabel", default="")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("convert", help="dense/irregular and csv/ts conversion")
    _add_input(p)
    p.add_argument("--to", choices=("dense", "irregular"), default=None)
    p.add_argument("--labels", default=None, help="labels CSV for ts output")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        seed = default_seed()
    except UsageError as err:
        print(f"fundata: error: {err}", file=sys.stderr)
        return 2
    parser = build_parser(seed)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "fpca" and args.input is None and args.inverse is None:
        print("fundata: error: fpca needs an input file or --inverse", file=sys.stderr)
        return 2
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        print("fundata: error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except UsageError as err:
        print(f"fundata: error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError, TypeError, IndexError, KeyError, RuntimeError,
            np.linalg.LinAlgError) as err:
        print(f"fundata: error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
