"""Command-line front end.

Subcommands: check, gluing, dim, basis, fit, converge.  Exit codes: 0 on
success, 1 on a failed validation, 2 on usage or parse errors.  Every output
starts with '#' header lines recording the configuration and the seed, and
identical invocations produce identical bytes.
"""

import csv
import io
import json
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor

import click

from .topology import MultiPatchVolume, TopologyError, VolumeParseError, check_nonsingular


# ---------------------------------------------------------------- helpers

def parse_range(text):
    """'3', '3,5,7' or '3..6' (inclusive) -> sorted list of ints."""
    out = set()
    try:
        for part in str(text).split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                out.update(range(int(a), int(b) + 1))
            elif part:
                out.add(int(part))
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse range {text!r}") from exc
    if not out:
        raise click.BadParameter("empty range")
    return sorted(out)


def load_volume_arg(source, validate=True):
    """A volume file path or the name of a bundled fixture."""
    from .volumes import FIXTURES, fixture_path
    path = source
    if not os.path.exists(source):
        if source in FIXTURES:
            path = fixture_path(source)
        else:
            raise click.UsageError(f"no such volume file or fixture: {source}")
    try:
        return MultiPatchVolume.load(path, validate=validate)
    except (VolumeParseError, TopologyError) as exc:
        raise click.UsageError(f"cannot load {source}: {exc}") from exc
    except OSError as exc:
        raise click.UsageError(f"cannot read {source}: {exc}") from exc


def header(ctx_params):
    lines = []
    for key in sorted(ctx_params):
        lines.append(f"# {key}={ctx_params[key]}")
    return "\n".join(lines) + "\n"


def emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore",
                       lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: _fmt(row.get(c, "")) for c in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6e}"
    return v


def workers():
    try:
        return max(1, int(os.environ.get("C1VOL_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- commands

@click.group()
def main():
    """C1 isogeometric spline spaces over trilinear multi-patch volumes."""


@main.command()
@click.option("--volume", required=True, help="Volume JSON file or fixture name.")
@click.option("--k", "k", default="0", show_default=True,
              help="Mesh parameters k for the grid-root test (range).")
@click.option("--out", default=None, help="Write the report to this file.")
def check(volume, k, out):
    """Gluing-assumption and non-singularity report (JSON)."""
    from .gluing import check_assumption1
    vol = load_volume_arg(volume, validate=False)
    ks = parse_range(k)
    certs = [check_nonsingular(vol, i) for i in range(vol.num_patches)]
    try:
        reports = {str(kk): check_assumption1(vol, kk).as_dict() for kk in ks}
        err = None
    except Exception as exc:     # degenerate interface data
        reports, err = {}, str(exc)
    ok = all(c.ok for c in certs) and err is None and all(r["passed"] for r in reports.values())
    doc = {"volume": volume, "k": ks, "passed": ok,
           "nonsingular": [{"patch": i, "ok": c.ok, "certified": c.certified,
                            "message": c.message} for i, c in enumerate(certs)],
           "assumption1": reports}
    if err:
        doc["error"] = err
    emit(json.dumps(doc, indent=1, sort_keys=True) + "\n", out)
    sys.exit(0 if ok else 1)


@main.command()
@click.option("--volume", required=True)
@click.option("--out", default=None)
def gluing(volume, out):
    """Gluing data of every inner face (exact rational coefficients)."""
    from .gluing import compute_gluing, identities_hold
    vol = load_volume_arg(volume)
    faces = []
    for face in vol.inner_faces:
        gd = compute_gluing(vol, face)
        poly = lambda P: None if P is None else [[str(x) for x in row] for row in P.c.tolist()]
        faces.append({"face": list(face.key), "lambda": str(gd.lam), "vol": str(gd.vol),
                      "alpha0": poly(gd.alpha0), "alpha1": poly(gd.alpha1),
                      "beta": poly(gd.beta), "gamma": poly(gd.gamma),
                      "beta0": poly(gd.beta0), "beta1": poly(gd.beta1),
                      "gamma0": poly(gd.gamma0), "gamma1": poly(gd.gamma1),
                      "delta0": poly(gd.delta0), "delta1": poly(gd.delta1),
                      "identities_hold": identities_hold(vol, gd),
                      "labelled_vertices": gd.fig2})
    emit(json.dumps({"volume": volume, "faces": faces}, indent=1) + "\n", out)


def _generic_cell(args):
    nu, p, r, k, seeds = args
    from .edgespace import assemble_subclassA, exact_kernel_dim, subclass_edge_dim_formula
    from .splinecore import SplineSpaceConfig
    from .volumes import generic_wedge
    dims = []
    for s in seeds:
        vol = generic_wedge(nu, seed=s, ks=(k,))
        dims.append(exact_kernel_dim(assemble_subclassA(vol, SplineSpaceConfig(p, r, k))))
    mode, _ = Counter(dims).most_common(1)[0]
    formula = subclass_edge_dim_formula(nu, p, r, k)
    return {"nu": nu, "p": p, "r": r, "k": k, "dim_edge": mode, "formula": formula,
            "agree": int(mode == formula), "samples": len(dims),
            "consistent": int(len(set(dims)) == 1),
            "all_dims": " ".join(str(d) for d in dims)}


GENERIC_COLUMNS = ("nu", "p", "r", "k", "dim_edge", "formula", "agree", "samples",
                   "consistent", "all_dims")


@main.command()
@click.option("--volume", default=None)
@click.option("--generic", "nu", type=int, default=None,
              help="Random perturbed volumes with an inner edge of this valency.")
@click.option("--p", "p", default="3", show_default=True)
@click.option("--r", "r", default="1", show_default=True)
@click.option("--k", "k", default=None, help="k range (default 0).")
@click.option("--L", "L", default=None, help="Refinement levels; k = 2^L - 1.")
@click.option("--samples", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mode", default="auto", show_default=True,
              type=click.Choice(["auto", "two-patch", "general", "subclassA"]))
@click.option("--out", default=None)
def dim(volume, nu, p, r, k, L, samples, seed, mode, out):
    """Dimension tables (CSV)."""
    from .c1space import CSV_COLUMNS, dims_report
    if (volume is None) == (nu is None):
        raise click.UsageError("give exactly one of --volume and --generic")
    ps, rs = parse_range(p), parse_range(r)
    if L is not None:
        ks = [2 ** x - 1 for x in parse_range(L)]
    else:
        ks = parse_range(k if k is not None else "0")
    params = {"volume": volume, "generic": nu, "p": ps, "r": rs, "k": ks,
              "samples": samples, "seed": seed, "mode": mode}
    cells = [(pp, rr, kk) for pp in ps for rr in rs for kk in ks if 1 <= rr <= pp - 2]
    if not cells:
        raise click.UsageError("no admissible (p, r) combination")
    if nu is not None:
        seeds = list(range(seed, seed + samples))
        jobs = [(nu, pp, rr, kk, seeds) for pp, rr, kk in cells]
        if workers() > 1:
            with ProcessPoolExecutor(workers()) as ex:
                rows = list(ex.map(_generic_cell, jobs))
        else:
            rows = [_generic_cell(j) for j in jobs]
        emit(header(params) + csv_text(GENERIC_COLUMNS, rows), out)
        sys.exit(0 if all(r_["consistent"] for r_ in rows) else 1)
    vol = load_volume_arg(volume)
    rows, failed = [], False
    for pp, rr, kk in cells:
        try:
            rows.append(dims_report(vol, pp, rr, kk, mode).row())
        except Exception as exc:     # record and continue with the next cell
            failed = True
            rows.append({"mode": mode, "p": pp, "r": rr, "k": kk, "dim_total": f"error: {exc}"})
    emit(header(params) + csv_text(CSV_COLUMNS, rows), out)
    sys.exit(1 if failed else 0)


@main.command()
@click.option("--volume", required=True)
@click.option("--p", type=int, required=True)
@click.option("--r", type=int, default=1, show_default=True)
@click.option("--k", type=int, default=0, show_default=True)
@click.option("--mode", default="auto", show_default=True,
              type=click.Choice(["auto", "two-patch", "general", "subclassA"]))
@click.option("--kernel", "kernel_mode", default="svd", show_default=True,
              type=click.Choice(["svd", "mds"]))
@click.option("--tol-rank", default=1e-9, show_default=True)
@click.option("--samples", default=100, show_default=True, help="Audit points per face.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, help="Write all basis functions as JSON.")
def basis(volume, p, r, k, mode, kernel_mode, tol_rank, samples, seed, out):
    """Build the basis, print family counts and the C1 audit."""
    from .c1space import AssumptionError, build_space, c1_audit
    vol = load_volume_arg(volume)
    try:
        B = build_space(vol, p, r, k, mode=mode, kernel_mode=kernel_mode, tol=tol_rank)
    except (AssumptionError, TopologyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    audit = c1_audit(B, samples, seed)
    summary = {"volume": volume, "p": p, "r": r, "k": k, "mode": B.mode, "seed": seed,
               "counts": B.counts, "dim": B.dim, "value_jump": audit.value_jump,
               "gradient_jump": audit.gradient_jump, "audit_passed": audit.passed}
    click.echo(json.dumps(summary, indent=1, sort_keys=True))
    if out:
        funcs = [B.function(j).to_json() for j in range(B.dim)]
        with open(out, "w", encoding="utf-8") as fh:
            json.dump({"summary": summary, "functions": funcs}, fh)
    sys.exit(0 if audit.passed else 1)


FIT_COLUMNS = ("p", "r", "k", "dim_total", "e_volume", "e_faces", "e_edge", "method",
               "iterations")


@main.command()
@click.option("--volume", required=True)
@click.option("--p", type=int, required=True)
@click.option("--r", type=int, default=1, show_default=True)
@click.option("--k", type=int, default=None)
@click.option("--L", "L", type=int, default=None)
@click.option("--target", default="builtin:cos-sin-cos", show_default=True)
@click.option("--max-dim", default=30000, show_default=True)
@click.option("--mode", default="auto", show_default=True,
              type=click.Choice(["auto", "two-patch", "general", "subclassA"]))
@click.option("--out", default=None)
def fit(volume, p, r, k, L, target, max_dim, mode, out):
    """L2 fit of a target; one CSV row with the three relative errors."""
    from .approx import builtin_target, l2_fit
    from .c1space import build_space, dims_report
    if k is None:
        k = 2 ** L - 1 if L is not None else 0
    try:
        builtin_target(target)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    vol = load_volume_arg(volume)
    params = {"volume": volume, "p": p, "r": r, "k": k, "target": target, "mode": mode,
              "max_dim": max_dim, "seed": 0}
    rep = dims_report(vol, p, r, k, mode)
    row = {"p": p, "r": r, "k": k, "dim_total": rep.dim_total}
    if rep.dim_total > max_dim:
        row["method"] = "skipped: above --max-dim"
        emit(header(params) + csv_text(FIT_COLUMNS, [row]), out)
        sys.exit(0)
    res = l2_fit(build_space(vol, p, r, k, mode=mode), target)
    row.update(e_volume=res.e_volume, e_faces=res.e_faces, e_edge=res.e_edge,
               method=res.method, iterations=res.iterations)
    emit(header(params) + csv_text(FIT_COLUMNS, [row]), out)


@main.command()
@click.option("--volume", required=True)
@click.option("--p", "p", default="3..6", show_default=True)
@click.option("--r", type=int, default=1, show_default=True)
@click.option("--L", "L", default="0..2", show_default=True)
@click.option("--target", default="builtin:cos-sin-cos", show_default=True)
@click.option("--max-dim", default=30000, show_default=True)
@click.option("--mode", default="auto", show_default=True,
              type=click.Choice(["auto", "two-patch", "general", "subclassA"]))
@click.option("--out", default=None)
def converge(volume, p, r, L, target, max_dim, mode, out):
    """Convergence study over p and refinement level L (CSV)."""
    from .approx import CONVERGENCE_COLUMNS, builtin_target, convergence_study
    try:
        builtin_target(target)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    vol = load_volume_arg(volume)
    ps, Ls = parse_range(p), parse_range(L)
    params = {"volume": volume, "p": ps, "r": r, "L": Ls, "target": target,
              "max_dim": max_dim, "mode": mode, "seed": 0}
    rows = convergence_study(vol, ps, r, Ls, target, max_dim, mode=mode)
    emit(header(params) + csv_text(CONVERGENCE_COLUMNS, rows), out)


if __name__ == "__main__":
    main()
