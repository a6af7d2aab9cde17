"""Command-line front door: a thin client of the service.

By default the service app is mounted in-process (no daemon needed); pass
--server to target a running instance instead.  Every failure prints the
machine-readable error JSON {code, module, message, context} on stderr and
exits with the code's status: schema 2, hypothesis 3, uncertified 4,
certification 5, domain 6, internal 1.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click
import httpx

EXIT_CODES = {"schema": 2, "hypothesis": 3, "uncertified": 4,
              "certification": 5, "domain": 6}


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient
    from .service.app import app

    return TestClient(app, base_url="http://treepot.local")


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    with _client(ctx.obj.get("server")) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            err = resp.json()
        except Exception:
            err = {"code": "internal", "module": "cli", "message": resp.text, "context": {}}
        click.echo(json.dumps(err, sort_keys=True), err=True)
        sys.exit(EXIT_CODES.get(err.get("code", ""), 1))
    return resp.json()


def _tree_ref(spec: str) -> dict:
    if spec.startswith("fixture:"):
        return {"fixture": spec.split(":", 1)[1]}
    return {"spec": json.loads(Path(spec).read_text())}


def _matrix_ref(matrix: str) -> dict:
    if matrix.startswith("fixture:"):
        return {"fixture": matrix.split(":", 1)[1]}
    text = Path(matrix).read_text()
    if matrix.endswith(".json"):
        return {"values": json.loads(text)}
    rows = [r for r in text.strip().splitlines() if r.strip()]
    return {"values": [[float(x) for x in r.split(",")] for r in rows]}


def _ray_spec(ray: str, repeat: str) -> dict:
    prefix = [int(x) for x in ray.split(",") if x != ""] if ray else []
    rep = [int(x) for x in repeat.split(",") if x != ""] if repeat else [0]
    return {"prefix": prefix, "repeat": rep}


def _emit(result: dict, out: Optional[str], fmt: str, csv_field: Optional[str] = None):
    if fmt == "csv" and csv_field and result.get(csv_field):
        text = result[csv_field]
    else:
        text = json.dumps(result, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.option("--server", default=None, help="URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: Optional[str]):
    """Potential theory of tree and ultrametric matrices."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.group()
def tree():
    """Tree matrix identities and finite potentials."""


@tree.command("verify-inverse")
@click.option("--spec", required=True)
@click.option("--depth", default=2, type=int)
@click.option("--mode", default="absorbed", type=click.Choice(["absorbed", "reflected"]))
@click.option("--tol", default=1e-10, type=float)
@click.option("--out", default=None)
@click.pass_context
def tree_verify_inverse(ctx, spec, depth, mode, tol, out):
    res = _post(ctx, "/tree/verify-inverse",
                {"tree": _tree_ref(spec), "depth": depth, "mode": mode, "tol": tol})
    _emit(res, out, "json")
    if not res["certified"]:
        sys.exit(EXIT_CODES["certification"])


@tree.command("potential")
@click.option("--spec", required=True)
@click.option("--depth", default=1, type=int)
@click.option("--format", "fmt", default="json", type=click.Choice(["json", "csv"]))
@click.option("--out", default=None)
@click.pass_context
def tree_potential(ctx, spec, depth, fmt, out):
    res = _post(ctx, "/tree/potential", {"tree": _tree_ref(spec), "depth": depth})
    _emit(res, out, fmt, csv_field="csv")


@tree.command("harmonic-decomp")
@click.option("--spec", required=True)
@click.option("--depth", default=1, type=int)
@click.option("--out", default=None)
@click.pass_context
def tree_harmonic_decomp(ctx, spec, depth, out):
    res = _post(ctx, "/tree/harmonic-decomp", {"tree": _tree_ref(spec), "depth": depth})
    _emit(res, out, "json")


@main.group()
def chain():
    """Chain simulation and certified absorption brackets."""


@chain.command("simulate")
@click.option("--spec", required=True)
@click.option("--seed", required=True, type=int)
@click.option("--paths", default=1000, type=int)
@click.option("--start", default="")
@click.option("--mode", default="absorbed", type=click.Choice(["absorbed", "reflected"]))
@click.option("--max-level", default=64, type=int)
@click.option("--resolution", default=2, type=int)
@click.option("--workers", default=1, type=int)
@click.option("--trajectory/--no-trajectory", default=False)
@click.option("--format", "fmt", default="json", type=click.Choice(["json", "csv"]))
@click.option("--out", default=None)
@click.pass_context
def chain_simulate(ctx, spec, seed, paths, start, mode, max_level, resolution,
                   workers, trajectory, fmt, out):
    res = _post(ctx, "/chain/simulate",
                {"tree": _tree_ref(spec), "seed": seed, "paths": paths, "start": start,
                 "mode": mode, "max_level": max_level, "resolution": resolution,
                 "workers": workers, "include_trajectory": trajectory or fmt == "csv"})
    _emit(res, out, fmt, csv_field="trajectory_csv")


@chain.command("classify")
@click.option("--spec", required=True)
@click.option("--tol", default=1e-8, type=float)
@click.option("--out", default=None)
@click.pass_context
def chain_classify(ctx, spec, tol, out):
    res = _post(ctx, "/chain/classify", {"tree": _tree_ref(spec), "tol": tol})
    _emit(res, out, "json")


@main.group()
def boundary():
    """Exit measures, boundary kernels, cascade simulation."""


@boundary.command("exit-measure")
@click.option("--spec", required=True)
@click.option("--resolution", default=2, type=int)
@click.option("--tol", default=1e-10, type=float)
@click.option("--mode", default="absorbed", type=click.Choice(["absorbed", "reflected"]))
@click.option("--out", default=None)
@click.pass_context
def boundary_exit_measure(ctx, spec, resolution, tol, mode, out):
    res = _post(ctx, "/boundary/exit-measure",
                {"tree": _tree_ref(spec), "resolution": resolution, "tol": tol,
                 "mode": mode})
    _emit(res, out, "json")
    if not res["converged"]:
        sys.exit(EXIT_CODES["uncertified"])


@boundary.command("kernel")
@click.option("--spec", required=True)
@click.option("--t", default=1.0, type=float)
@click.option("--xi", default="", help="comma-separated child indices")
@click.option("--eta", default="1")
@click.option("--mode", default="absorbed", type=click.Choice(["absorbed", "reflected"]))
@click.option("--resolution", default=4, type=int)
@click.option("--out", default=None)
@click.pass_context
def boundary_kernel(ctx, spec, t, xi, eta, mode, resolution, out):
    res = _post(ctx, "/boundary/kernel",
                {"tree": _tree_ref(spec), "t": t, "mode": mode,
                 "resolution": resolution, "xi": _ray_spec(xi, ""),
                 "eta": _ray_spec(eta, "")})
    _emit(res, out, "json")


@boundary.command("simulate")
@click.option("--spec", required=True)
@click.option("--seed", required=True, type=int)
@click.option("--paths", default=1000, type=int)
@click.option("--resolution", default=4, type=int)
@click.option("--horizon", default=10.0, type=float)
@click.option("--reflected", is_flag=True, default=False)
@click.option("--start", default="")
@click.option("--workers", default=1, type=int)
@click.option("--out", default=None)
@click.pass_context
def boundary_simulate(ctx, spec, seed, paths, resolution, horizon, reflected, start,
                      workers, out):
    res = _post(ctx, "/boundary/simulate",
                {"tree": _tree_ref(spec), "seed": seed, "paths": paths,
                 "resolution": resolution, "horizon": horizon,
                 "mode": "reflected" if reflected else "absorbed",
                 "start": _ray_spec(start, ""), "workers": workers})
    _emit(res, out, "json")


@main.group()
def martin():
    """Martin kernels."""


@martin.command("kernel")
@click.option("--spec", required=True)
@click.option("--node", required=True, help="dotted node path")
@click.option("--ray", default="")
@click.option("--ray-repeat", default="0")
@click.option("--mode", default="absorbed",
              type=click.Choice(["absorbed", "absorbed-series", "reflected",
                                 "absorbed-irregular"]))
@click.option("--resolution", default=4, type=int)
@click.option("--out", default=None)
@click.pass_context
def martin_kernel_cmd(ctx, spec, node, ray, ray_repeat, mode, resolution, out):
    res = _post(ctx, "/martin/kernel",
                {"tree": _tree_ref(spec), "node": node, "mode": mode,
                 "resolution": resolution, "ray": _ray_spec(ray, ray_repeat)})
    _emit(res, out, "json")


@main.group()
def ultra():
    """Ultrametric matrices: checks, embeddings, generators."""


@ultra.command("check")
@click.option("--matrix", default=None)
@click.option("--words", default=None, help="word-family JSON path or fixture")
@click.option("--resolution", default=2, type=int)
@click.option("--out", default=None)
@click.pass_context
def ultra_check(ctx, matrix, words, resolution, out):
    payload: dict = {"resolution": resolution}
    if matrix:
        payload["matrix"] = _matrix_ref(matrix)
    if words:
        if words.startswith("fixture:"):
            payload["family"] = {"fixture": words.split(":", 1)[1]}
        else:
            payload["family"] = {"family": json.loads(Path(words).read_text())}
    res = _post(ctx, "/ultra/check", payload)
    _emit(res, out, "json")
    if res.get("ultrametric") and res.get("H1") is False:
        sys.exit(EXIT_CODES["hypothesis"])


@ultra.command("embed")
@click.option("--matrix", required=True)
@click.option("--out", default=None)
@click.pass_context
def ultra_embed(ctx, matrix, out):
    res = _post(ctx, "/ultra/embed", {"matrix": _matrix_ref(matrix)})
    _emit(res, out, "json")


@ultra.command("generator")
@click.option("--matrix", required=True)
@click.option("--check/--no-check", default=True)
@click.option("--tol", default=1e-10, type=float)
@click.option("--out", default=None)
@click.pass_context
def ultra_generator_cmd(ctx, matrix, check, tol, out):
    res = _post(ctx, "/ultra/generator",
                {"matrix": _matrix_ref(matrix), "check": check, "tol": tol})
    _emit(res, out, "json")
    if check and res.get("certified"):
        click.echo("QU=-I certified", err=True)


@main.group()
def report():
    """Acceptance suite."""


@report.command("all")
@click.option("--fast", is_flag=True, default=False,
              help="reduced Monte Carlo path counts")
@click.option("--out", default=None)
@click.pass_context
def report_all_cmd(ctx, fast, out):
    res = _post(ctx, "/report/all", {"fast": fast})
    for c in res["criteria"]:
        status = "PASS" if c["passed"] else "FAIL"
        click.echo(f"[{status}] {c['name']}: {c['detail']} ({c['seconds']:.1f}s)")
    if out:
        Path(out).write_text(json.dumps(res, indent=1, sort_keys=True) + "\n")
    if not res["passed"]:
        sys.exit(1)


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
