"""FastAPI service wrapping the core package.

Endpoints mirror the CLI subcommands one-to-one; every failure returns the
uniform error JSON {code, module, message, context} with HTTP 422.
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..boundary import exit_measure
from ..bprocess import (KILLED, BoundaryKernel, green_identity_residual, kernel_p,
                        occupancy_statistic)
from ..chain import (absorption_probability, classify_transience, hitting_probability,
                     sample_exit_statistics, simulate_chain)
from ..errors import SchemaError, TreepotError
from ..fixtures import FIXTURES, load_tree_spec
from ..martin import martin_kernel
from ..report import run_all
from ..treematrix import finite_potential, harmonic_decomposition, inverse_residual, matrix_csv
from ..trees import BoundaryRay, RootedTree, build_tree, parse_path, path_str
from ..ultra import (WordFamily, check_hypotheses, minimal_tree_extension,
                     u_boundary, ultrametric_generator, verify_ultrametric)
from ..weights import WeightSequence
from . import schemas as S

app = FastAPI(title="treepot", version=__version__,
              description="Potential theory of tree and ultrametric matrices")


@app.exception_handler(TreepotError)
async def treepot_error_handler(_: Request, exc: TreepotError):
    return JSONResponse(status_code=422, content=exc.to_json())


def _resolve_tree(ref: S.TreeRef) -> Tuple[RootedTree, WeightSequence]:
    if ref.fixture is not None:
        if ref.fixture not in FIXTURES:
            raise SchemaError("cli", f"unknown fixture {ref.fixture!r}",
                              known=sorted(FIXTURES))
        spec, w = load_tree_spec(FIXTURES[ref.fixture])
    else:
        spec, w = load_tree_spec(ref.spec)
    return build_tree(spec, 4), w


def _resolve_matrix(ref: S.MatrixRef) -> np.ndarray:
    if ref.values is not None:
        return np.array(ref.values, dtype=float)
    from ..fixtures import load_matrix_file

    return load_matrix_file(f"fixture:{ref.fixture}")


def _resolve_family(ref: S.FamilyRef) -> WordFamily:
    if ref.family is not None:
        return WordFamily.from_json(ref.family)
    from ..fixtures import load_word_family

    return load_word_family(f"fixture:{ref.fixture}")


def _ray(tree: RootedTree, spec: S.RaySpec) -> BoundaryRay:
    pat = spec.repeat or [0]

    def rule(level: int, path):
        want = pat[level % len(pat)]
        return min(want, tree.n_children(path) - 1)

    return BoundaryRay(tree, tuple(spec.prefix), rule)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/tree/verify-inverse", response_model=S.VerifyInverseResponse)
def tree_verify_inverse(req: S.VerifyInverseRequest):
    tree, w = _resolve_tree(req.tree)
    nodes = tree.nodes_upto(req.depth)
    residual = inverse_residual(tree, w, nodes, req.mode)
    return S.VerifyInverseResponse(residual=residual, nodes=len(nodes),
                                   certified=residual <= req.tol)


@app.post("/tree/potential", response_model=S.PotentialResponse)
def tree_potential(req: S.PotentialRequest):
    tree, w = _resolve_tree(req.tree)
    order, V = finite_potential(tree, w, req.depth)
    return S.PotentialResponse(order=[path_str(p) for p in order],
                               potential=V.tolist(), csv=matrix_csv(order, V))


@app.post("/tree/harmonic-decomp", response_model=S.HarmonicDecompResponse)
def tree_harmonic_decomp(req: S.HarmonicDecompRequest):
    tree, w = _resolve_tree(req.tree)
    hd = harmonic_decomposition(tree, w, req.depth)
    return S.HarmonicDecompResponse(order=[path_str(p) for p in hd.order],
                                    rank=hd.rank,
                                    btilde=[path_str(p) for p in hd.btilde],
                                    qbar_residual=hd.qbar_residual,
                                    potential=hd.potential.tolist(),
                                    harmonic=hd.harmonic.tolist())


@app.post("/chain/simulate", response_model=S.ChainSimulateResponse)
def chain_simulate(req: S.ChainSimulateRequest):
    tree, w = _resolve_tree(req.tree)
    start = parse_path(req.start)
    stats = sample_exit_statistics(tree, w, start, req.paths, req.seed,
                                   req.resolution, req.mode, req.max_level,
                                   workers=req.workers)
    traj_csv = None
    if req.include_trajectory:
        tr = simulate_chain(tree, w, start, req.seed, req.mode, req.max_level,
                            req.max_time)
        traj_csv = tr.to_csv()
    freq = {path_str(k): v for k, v in sorted(stats["exit_frequencies"].items())}
    return S.ChainSimulateResponse(
        status_counts={"absorbed": stats["absorbed"], "escaped": stats["escaped"]},
        exit_frequencies=freq, trajectory_csv=traj_csv)


@app.post("/chain/classify", response_model=S.ClassifyResponse)
def chain_classify(req: S.ClassifyRequest):
    tree, w = _resolve_tree(req.tree)
    rep = classify_transience(tree, w, req.schedule, req.tol)
    return S.ClassifyResponse(classification=rep.classification,
                              gbar_root=S.BracketModel(**rep.bracket.to_json()),
                              shortcut=rep.shortcut)


@app.post("/chain/absorption", response_model=S.BracketModel)
def chain_absorption(req: S.AbsorptionRequest):
    tree, w = _resolve_tree(req.tree)
    br = absorption_probability(tree, w, parse_path(req.node), req.schedule, req.tol)
    return S.BracketModel(**br.to_json())


@app.post("/chain/hitting", response_model=S.BracketModel)
def chain_hitting(req: S.HittingRequest):
    tree, w = _resolve_tree(req.tree)
    br = hitting_probability(tree, w, parse_path(req.source), parse_path(req.target),
                             req.mode, tol=req.tol)
    return S.BracketModel(**br.to_json())


@app.post("/boundary/exit-measure", response_model=S.ExitMeasureResponse)
def boundary_exit_measure(req: S.ExitMeasureRequest):
    tree, w = _resolve_tree(req.tree)
    mu = exit_measure(tree, w, req.resolution, tol=req.tol, mode=req.mode)
    payload = mu.to_json()
    return S.ExitMeasureResponse(**payload)


@app.post("/boundary/kernel", response_model=S.BoundaryKernelResponse)
def boundary_kernel(req: S.BoundaryKernelRequest):
    tree, w = _resolve_tree(req.tree)
    mu = exit_measure(tree, w, req.resolution, mode=req.mode)
    bk = BoundaryKernel(mu, req.mode)
    xi, eta = _ray(tree, req.xi), _ray(tree, req.eta)
    p = kernel_p(bk, req.t, xi, eta)
    meet = xi.meet_level(eta)
    green = None
    if req.mode == "absorbed":
        green = abs(green_identity_residual(bk, xi, eta).mid)
    return S.BoundaryKernelResponse(p=p.mid, p_error=p.err, green_residual=green,
                                    meet_level=meet)


@app.post("/boundary/simulate", response_model=S.BoundarySimulateResponse)
def boundary_simulate(req: S.BoundarySimulateRequest):
    tree, w = _resolve_tree(req.tree)
    mu = exit_measure(tree, w, req.resolution, mode=req.mode)
    bk = BoundaryKernel(mu, req.mode)
    start = _ray(tree, req.start).node(req.resolution)
    from ..bprocess import batch_paths

    _, paths = batch_paths(bk, start, req.resolution, req.horizon, req.paths,
                           req.seed, workers=req.workers)
    lifetimes = [p.end_time for p in paths if p.status == KILLED]
    hist: Dict[str, int] = {}
    for lt in lifetimes:
        key = f"{int(lt * 2) / 2:.1f}"
        hist[key] = hist.get(key, 0) + 1
    occupancy: Dict[str, Dict[str, float]] = {}
    for t in req.occupancy_times:
        row: Dict[str, float] = {}
        for node in tree.level_nodes(1):
            inside, alive = occupancy_statistic(paths, t, node)
            row[path_str(node)] = inside / max(len(paths), 1)
        occupancy[f"{t:g}"] = row
    return S.BoundarySimulateResponse(
        paths=len(paths), killed=len(lifetimes),
        mean_lifetime=float(np.mean(lifetimes)) if lifetimes else None,
        lifetime_histogram=dict(sorted(hist.items())), occupancy=occupancy,
        mean_renewals=float(np.mean([p.renewals for p in paths])))


@app.post("/martin/kernel", response_model=S.MartinResponse)
def martin_kernel_endpoint(req: S.MartinRequest):
    tree, w = _resolve_tree(req.tree)
    mu = None
    if req.mode in ("absorbed-series", "reflected"):
        mode = "reflected" if req.mode == "reflected" else "absorbed"
        mu = exit_measure(tree, w, req.resolution, mode=mode)
    mv = martin_kernel(tree, w, mu, parse_path(req.node), _ray(tree, req.ray), req.mode)
    return S.MartinResponse(**mv.to_json())


@app.post("/ultra/check")
def ultra_check(req: S.UltraCheckRequest):
    if (req.matrix is None) == (req.family is None):
        raise SchemaError("cli", "provide exactly one of 'matrix' or 'family'")
    if req.matrix is not None:
        U = _resolve_matrix(req.matrix)
        bad = verify_ultrametric(U)
        if bad is not None:
            return {"ultrametric": False, "violation": list(bad)}
        rep = check_hypotheses(U)
        return {"ultrametric": True, **rep.to_json()}
    fam = _resolve_family(req.family)
    rep = u_boundary(fam, req.resolution, req.probe_depth)
    return {"ultrametric": True, "boundary": rep.to_json()}


@app.post("/ultra/embed")
def ultra_embed(req: S.UltraEmbedRequest):
    U = _resolve_matrix(req.matrix)
    ext = minimal_tree_extension(U)
    out = ext.to_json()
    out["restriction_residual"] = ext.restriction_residual(U)
    return out


@app.post("/ultra/generator")
def ultra_generator_endpoint(req: S.UltraGeneratorRequest):
    U = _resolve_matrix(req.matrix)
    gen = ultrametric_generator(U, req.tol)
    out = gen.to_json()
    if req.check and not gen.certified:
        from ..errors import CertificationError

        raise CertificationError("ultrametric", "generator certification failed",
                                 **{k: out[k] for k in ("symmetry_residual",
                                                        "inverse_residual",
                                                        "row_sum_max")})
    return out


@app.post("/report/all", response_model=S.ReportResponse)
def report_all(req: S.ReportRequest):
    results = run_all(fast=req.fast)
    return S.ReportResponse(passed=all(r.passed for r in results),
                            criteria=[S.CriterionModel(**r.to_json()) for r in results])
