"""Command-line front end.

Exit codes: 0 success, 1 a residual or Monte-Carlo comparison exceeded its
tolerance, 2 bad input, 3 the tensor memory guard tripped.
"""

from __future__ import annotations

import contextlib
import json
import sys

import click
import numpy as np

from . import cumulants as cm
from . import magnus as mg
from . import models
from .lie_ops import bch
from .signature import log_signature, read_path_jsonl, sig_path
from .tensor_core import (
    MemoryGuardError,
    SymTensor,
    TruncatedTensor,
    extend,
    sym_project,
    tensor_from_json,
    truncate,
    word_label,
)

EXIT_TOL, EXIT_INPUT, EXIT_MEMORY = 1, 2, 3


class ToleranceFailure(Exception):
    pass


def _fmt(c) -> str:
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    if hasattr(c, "denominator"):
        return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
    return str(c)


def _rows(x: TruncatedTensor | SymTensor, skip_zero: bool = True):
    for w, c in x.items(skip_zero):
        yield word_label(w, x.d), c


def emit(x, fmt: str, out, extra: dict | None = None, columns: dict | None = None):
    """Print a tensor as JSON ({"words": ...}) or CSV (word,value[,more columns])."""
    rows = list(_rows(x))
    if fmt == "csv":
        header = ["word", "value"] + list(columns or {})
        out.write(",".join(header) + "\n")
        for label, c in rows:
            vals = [label, _fmt(c)] + [_fmt(col.get(label, "")) for col in (columns or {}).values()]
            out.write(",".join(vals) + "\n")
        return
    doc = dict(extra or {})
    doc["d"], doc["N"] = x.d, x.N
    doc["words"] = {label: _fmt(c) for label, c in rows}
    if not rows and x.scalar != 0:
        doc["words"] = {"()": _fmt(x.scalar)}
    for name, col in (columns or {}).items():
        doc[name] = {k: _fmt(v) for k, v in col.items()}
    out.write(json.dumps(doc, indent=2) + "\n")


def _read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


@contextlib.contextmanager
def _open_out(path):
    if path:
        with open(path, "w") as fh:
            yield fh
    else:
        yield sys.stdout


format_opt = click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
out_opt = click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None, help="Write to a file.")


@click.group()
def cli():
    """Signatures, Magnus/BCH expansions and signature cumulants."""


@cli.command("sig")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--from", "s", type=float, default=None)
@click.option("--to", "t", type=float, default=None)
@click.option("-d", type=int, default=None)
@click.option("-N", "N", type=int, default=None)
@click.option("--log", "take_log", is_flag=True, help="Print the log-signature.")
@click.option("--exact", is_flag=True, help="Read coefficients as exact rationals.")
@format_opt
@out_opt
def cmd_sig(path, s, t, d, N, take_log, exact, fmt, out):
    """Signature (or log-signature) of a JSONL path over (FROM, TO]."""
    with open(path) as fh:
        p = read_path_jsonl(fh, d, N, exact=True if exact else None)
    res = log_signature(p, s, t) if take_log else sig_path(p, s, t)
    with _open_out(out) as fh:
        emit(res, fmt, fh)


@cli.command("bch")
@click.argument("tensors", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-N", "N", type=int, default=None, help="Truncation level (default: inputs' level).")
@click.option("--exact", is_flag=True)
@format_opt
@out_opt
def cmd_bch(tensors, N, exact, fmt, out):
    """log(exp(x1) ... exp(xn)) for tensor-JSON inputs."""
    xs = [tensor_from_json(_read_json(f), True if exact else None) for f in tensors]
    if N is not None:
        xs = [truncate(x, N) if x.N > N else extend(x, N) for x in xs]
    if len({(x.shape, x.exact) for x in xs}) != 1:
        raise ValueError("inputs differ in shape or scalar mode")
    with _open_out(out) as fh:
        emit(bch(*xs), fmt, fh)


@cli.command("magnus")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["jump", "ode", "expansion"]), default="jump", show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--check-tol", type=float, default=1e-8, show_default=True, help="Allowed gap to the log-signature.")
@click.option("-N", "N", type=int, default=None)
@format_opt
@out_opt
def cmd_magnus(path, method, tol, check_tol, N, fmt, out):
    """Log-signature by the Magnus route, compared with the product of exponentials."""
    with open(path) as fh:
        p = read_path_jsonl(fh, None, N)
    if method == "ode":
        rep = mg.hausdorff_solve(p, tol=tol)
        omega, extra = rep.omega, {"steps": rep.steps, "estimated_error": rep.estimated_error}
    elif method == "expansion":
        omega, extra = mg.magnus_levels(p), {}
    else:
        omega, extra = mg.jump_magnus(p, tol=tol), {}
    ref = log_signature(p)
    resid = float(omega.to_float().max_abs_diff(ref.to_float()))
    extra["residual"] = resid
    with _open_out(out) as fh:
        emit(omega, fmt, fh, extra)
    if resid > check_tol:
        raise ToleranceFailure(f"residual {resid:g} exceeds {check_tol:g}")


@cli.command("cumulants")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--method",
    type=click.Choice(["oracle", "G", "H", "commutative", "all"]),
    default="oracle",
    show_default=True,
)
@click.option("--node", default=None, help="Tree node id (default: root).")
@click.option("-t", "t", type=float, default=0.0, help="Start time for model files.")
@click.option("-N", "N", type=int, default=4, show_default=True, help="Level for model files.")
@click.option("--tol", type=float, default=0.0, show_default=True, help="Allowed residual for --method all.")
@format_opt
@out_opt
def cmd_cumulants(model_file, method, node, t, N, tol, fmt, out):
    """Signature cumulants of a tree (JSON) or a Gaussian model spec."""
    obj = _read_json(model_file)
    if "nodes" not in obj:
        if obj.get("model") != "tdbm":
            raise ValueError("model files for this command must be tree JSON or {'model': 'tdbm', ...}")
        g = _tdbm(obj)
        res = cm.gaussian_cumulant(g, t, float(obj.get("T", 1.0)), N)
        with _open_out(out) as fh:
            emit(res, fmt, fh)
        return
    model = cm.FiniteTreeModel.from_json(obj)
    v = model.root if node is None else _node_id(model, node)
    extra = {"node": v, "exact": model.exact}
    if method == "commutative":
        xi = _shadow_payoff(model)
        K = cm.commutative_recursion_tree(model, xi)
        O = cm.commutative_oracle_tree(model, xi)
        resid = max(K[u].max_abs_diff(O[u]) for u in K)
        extra["residual"] = resid
        with _open_out(out) as fh:
            emit(K[v], fmt, fh, extra)
        if resid > tol:
            raise ToleranceFailure(f"commutative residual {resid} exceeds {tol}")
        return
    oracle = cm.signature_cumulants(model)
    if method == "oracle":
        res = oracle
    elif method == "G":
        res = cm.recursion_G(model)
    elif method == "H":
        res = cm.recursion_H(model)
    else:
        g_res, h_res = cm.recursion_G(model), cm.recursion_H(model)
        rg, rh = cm.max_residual(oracle, g_res), cm.max_residual(oracle, h_res)
        extra["residual_G"], extra["residual_H"] = _fmt(rg), _fmt(rh)
        with _open_out(out) as fh:
            emit(oracle[v], fmt, fh, extra)
        if max(rg, rh) > tol:
            raise ToleranceFailure(f"oracle triangle residual {max(rg, rh)} exceeds {tol}")
        return
    with _open_out(out) as fh:
        emit(res[v], fmt, fh, extra)


def _node_id(model, node):
    for cand in (node, _maybe_int(node)):
        if cand in model.nodes:
            return cand
    raise ValueError(f"unknown node {node!r}")


def _maybe_int(s):
    try:
        return int(s)
    except (TypeError, ValueError):
        return s


def _shadow_payoff(model):
    """Ξ(leaf) = symmetric projection of the summed jumps along the leaf's path."""
    xi = {}
    for leaf in model.leaves():
        acc = SymTensor.zero(model.shape, model.exact)
        for u in model.path_to_root(leaf)[1:]:
            acc = acc + sym_project(model.nodes[u].jump)
        xi[leaf] = acc
    return xi


def _tdbm(obj) -> cm.GaussianMartingaleModel:
    if "times" in obj:
        return cm.GaussianMartingaleModel.piecewise_constant(obj["times"], obj["a"])
    return cm.GaussianMartingaleModel.constant(obj["a"])


@cli.command("model")
@click.argument("kind", type=click.Choice(["fawcett", "levy", "tdbm", "volterra"]))
@click.argument("spec", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("-d", type=int, default=2, show_default=True)
@click.option("-t", "t", type=float, default=0.0, show_default=True)
@click.option("-T", "T", type=float, default=None, help="Horizon (default: spec's T or 1).")
@click.option("-N", "N", type=int, default=4, show_default=True)
@click.option("--variant", type=click.Choice(["derived", "printed"]), default="derived", show_default=True)
@format_opt
@out_opt
def cmd_model(kind, spec, d, t, T, N, variant, fmt, out):
    """Closed-form cumulants of the model classes."""
    obj = _read_json(spec) if spec else {}
    T = float(obj.get("T", 1.0)) if T is None else T
    if kind == "fawcett":
        res = models.fawcett(d, t, T, N)
    elif kind == "levy":
        if not obj:
            raise ValueError("levy needs a spec file")
        res = models.levy_cumulant(models.levy_from_spec(obj), t, T, N)
    elif kind == "tdbm":
        if not obj:
            raise ValueError("tdbm needs a spec file")
        res = cm.gaussian_cumulant(_tdbm(obj), t, T, N)
    else:
        if t != 0.0:
            raise ValueError("volterra cumulants are only available at t = 0 from the CLI")
        vs = models.volterra_from_spec(obj) if obj else models.VolterraSpec((models.Kernel(),) * 2, (1.0, 1.0), T)
        vs.T = T
        res = models.volterra_cumulants(vs, variant=variant)
    with _open_out(out) as fh:
        emit(res, fmt, fh)


@cli.command("mc")
@click.argument("spec", type=click.Path(exists=True, dir_okay=False))
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("-N", "N", type=int, default=3, show_default=True)
@click.option("--chunk", type=int, default=10_000, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--z-max", type=float, default=3.0, show_default=True, help="Allowed |estimate - closed form| / stderr.")
@format_opt
@out_opt
def cmd_mc(spec, paths, seed, N, chunk, workers, z_max, fmt, out):
    """Monte-Carlo signature cumulant with standard errors and closed-form comparison."""
    obj = _read_json(spec)
    sampler, closed = models.sampler_from_spec(obj)
    res = cm.mc_expected_signature(sampler, paths, seed, N, chunk, workers)
    kappa, se = cm.mc_signature_cumulant(res)
    cols = {"stderr": {word_label(w, kappa.d): c for w, c in se.items(False) if len(w) >= 1}}
    extra = {"seed": seed, "paths": paths}
    worst = 0.0
    if closed is not None:
        ref = closed(N)
        ref = truncate(ref, N) if ref.N > N else extend(ref, N)
        cols["closed_form"], cols["z"] = {}, {}
        for w, c in kappa.items(False):
            if not w:
                continue
            label = word_label(w, kappa.d)
            cols["closed_form"][label] = ref[w]
            s = se[w]
            if s > 0:
                z = (c - ref[w]) / s
                cols["z"][label] = z
                worst = max(worst, abs(z))
        extra["max_abs_z"] = worst
    for key, val in res.extras.items():
        extra[f"mean_{key}"] = float(np.mean(val))
        extra[f"stderr_{key}"] = float(np.std(val, ddof=1) / np.sqrt(val.size))
    click.echo(f"seed: {seed}", err=True)
    with _open_out(out) as fh:
        emit(kappa, fmt, fh, extra, cols)
    if worst > z_max:
        raise ToleranceFailure(f"max |z| = {worst:.2f} exceeds {z_max}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_INPUT
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except MemoryGuardError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_MEMORY
    except ToleranceFailure as exc:
        click.echo(f"tolerance: {exc}", err=True)
        return EXIT_TOL
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
