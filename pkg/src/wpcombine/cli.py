"""Command-line front end.

Reads P-values and weights from a CSV file (header ``p,weight`` or
``log_p,weight``) or a JSON document, combines them and prints a table.
``--out`` writes the machine-readable report; ``--verify`` recomputes a
saved report and checks that ``combined_p`` is reproduced exactly.

Exit codes: 0 success, 1 verification mismatch, 2 input error,
3 expansion result flagged order-insufficient.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, TextIO

from .clustering import DEFAULT_ETA, ClusterSet, cluster
from .core_model import (
    DomainError,
    WeightedPValues,
    compute_raw_t,
    compute_t,
    normalize_inverse_weights,
)
from .exact import fisher_combine, general_combine, good_combine
from .expansion import DEFAULT_ORDER, MAX_ORDER, expansion_combine
from .oracle import hp_evaluate, mc_estimate

METHODS = ("fisher", "good", "general", "expansion", "auto")
CANCELLATION_WARN = 8.0
# auto never widens the clustering radius beyond this
AUTO_MAX_ETA = 1.0

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_ORDER = 0, 1, 2, 3


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    method: str = "auto"
    eta: float = DEFAULT_ETA
    order: int = DEFAULT_ORDER
    mc_check: int | None = None
    seed: int = 0
    precision_digits: int | None = None
    input_path: str | None = None
    input_format: str | None = None
    out_path: str | None = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}")
        if not (self.eta >= 0.0):
            raise InputError("eta must be non-negative")
        if not 0 <= self.order <= MAX_ORDER:
            raise InputError(f"order must lie in [0, {MAX_ORDER}]")
        if self.mc_check is not None and self.mc_check < 1000:
            raise InputError("--mc-check needs at least 1000 samples")
        if self.precision_digits is not None and self.precision_digits < 30:
            raise InputError("--precision needs at least 30 digits")


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise InputError(f"line {line}: {what} is not a number: {text!r}") from None


def _check_item(log_p: float, w: float, where: str) -> None:
    if math.isnan(log_p) or log_p > 0.0 or log_p == -math.inf:
        raise InputError(f"{where}: P-value must lie in (0, 1]")
    if not (w > 0.0) or math.isinf(w):
        raise InputError(f"{where}: weight must be positive, got {w!r}")


def read_csv(stream: TextIO) -> WeightedPValues:
    reader = csv.reader(stream)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise InputError("line 1: empty input") from None
    if "weight" not in header or not ({"p", "log_p"} & set(header)):
        raise InputError("line 1: header must be 'p,weight' or 'log_p,weight'")
    use_log = "log_p" in header
    pcol = header.index("log_p" if use_log else "p")
    wcol = header.index("weight")
    log_p, weights = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) <= max(pcol, wcol) or not row[pcol].strip() or not row[wcol].strip():
            raise InputError(f"line {line}: missing p or weight")
        pv = _parse_float(row[pcol], "log_p" if use_log else "p", line)
        w = _parse_float(row[wcol], "weight", line)
        if not use_log:
            if not (0.0 < pv <= 1.0):
                raise InputError(f"line {line}: P-value must lie in (0, 1], got {pv!r}")
            pv = math.log(pv)
        _check_item(pv, w, f"line {line}")
        log_p.append(pv)
        weights.append(w)
    if not log_p:
        raise InputError("no data rows")
    return WeightedPValues.from_log_pvalues(log_p, weights)


def read_document(doc: dict[str, Any]) -> tuple[WeightedPValues, dict[str, Any]]:
    items = doc.get("items")
    if not isinstance(items, list) or not items:
        raise InputError("document needs a non-empty 'items' list")
    log_p, weights = [], []
    for n, item in enumerate(items, start=1):
        where = f"item {n}"
        if not isinstance(item, dict) or "weight" not in item or not ({"p", "log_p"} & item.keys()):
            raise InputError(f"{where}: needs 'weight' and 'p' or 'log_p'")
        w = _parse_float(item["weight"], "weight", n)
        if "log_p" in item:
            lp = _parse_float(item["log_p"], "log_p", n)
        else:
            pv = _parse_float(item["p"], "p", n)
            if not (0.0 < pv <= 1.0):
                raise InputError(f"{where}: P-value must lie in (0, 1], got {pv!r}")
            lp = math.log(pv)
        _check_item(lp, w, where)
        log_p.append(lp)
        weights.append(w)
    settings = {k: doc[k] for k in ("method", "eta", "order") if k in doc}
    return WeightedPValues.from_log_pvalues(log_p, weights), settings


def _fisher_terms(t: float, L: int) -> list[float]:
    return [math.exp(-t + (l * math.log(t) if t > 0 else 0.0) - math.lgamma(l + 1)) for l in range(L)]


@dataclass
class _Outcome:
    method: str
    p: float
    index: float
    terms: list[dict[str, Any]]
    used: ClusterSet
    truncation: float | None = None
    warnings: tuple[str, ...] = ()
    hp_target: Any = None
    mc_source: Any = None
    mc_t: float | None = None

    @property
    def trustworthy(self) -> bool:
        return 0.0 <= self.p <= 1.0 and self.index <= CANCELLATION_WARN


def _combine(method: str, data: WeightedPValues, r, t, cs: ClusterSet, order: int) -> _Outcome:
    if method == "fisher":
        t_f = math.fsum(-lp for lp in data.log_p)
        ones = [1.0] * data.size
        return _Outcome(
            method,
            fisher_combine(t_f, data.size),
            0.0,
            [{"l": l, "value": v} for l, v in enumerate(_fisher_terms(t_f, data.size))],
            cluster(ones, 0.0),
            hp_target=cluster(ones, 0.0),
            mc_source=ones,
            mc_t=t_f,
        )
    if method == "good":
        try:
            res = good_combine(r, t)
        except DomainError as exc:
            raise InputError(str(exc)) from None
        terms = [
            {"source": i, "r": v, "coefficient": c, "value": x}
            for i, v, c, x in zip(r.index, r.values, res.coefficients, res.diagnostics.terms)
        ]
        return _Outcome(method, res.combined_p, res.diagnostics.cancellation_index, terms, cluster(r, 0.0), hp_target=r)
    if method == "general":
        used = cluster(r, 0.0)
        res = general_combine(used, t)
        terms = [
            {"cluster": k, "value": v, "nested": nv}
            for k, (v, nv) in enumerate(zip(res.diagnostics.terms, res.diagnostics.nested_terms))
        ]
        return _Outcome(method, res.combined_p, res.diagnostics.cancellation_index, terms, used, hp_target=used)
    res = expansion_combine(cs, t, order)
    terms = [
        {
            "order": term.order,
            "factors": [list(f) for f in term.factors],
            "coefficient": term.coefficient,
            "shifted": list(term.shifted),
            "value": term.value,
        }
        for term in res.terms
    ]
    return _Outcome(
        "expansion", res.combined_p, res.cancellation_index, terms, cs,
        truncation=res.truncation_bound, warnings=res.warnings, hp_target=cs,
    )


def _auto_method(cs: ClusterSet) -> str:
    if cs.zero_spread:
        return "fisher" if cs.m == 1 else "general"
    return "expansion"


def _auto(data: WeightedPValues, r, t, eta: float, order: int) -> tuple[_Outcome, float, list[str]]:
    """Pick a method; widen the radius while the answer is cancellation-limited."""
    notes = []
    cs = cluster(r, eta)
    outcome = _combine(_auto_method(cs), data, r, t, cs, order)
    while not outcome.trustworthy and cs.m > 1 and eta < AUTO_MAX_ETA:
        gaps = [b - a for a, b in zip(cs.centers, cs.centers[1:])]
        eta = min(max(2.0 * eta, min(gaps)), AUTO_MAX_ETA)
        cs = cluster(r, eta)
        outcome = _combine(_auto_method(cs), data, r, t, cs, order)
        notes.append(f"auto: cancellation-limited result, radius widened to {eta!r}")
    return outcome, eta, notes


def run(config: RunConfig, data: WeightedPValues) -> tuple[int, dict[str, Any]]:
    """Combine ``data`` according to ``config``; return exit code and report."""
    config.validate()
    r = normalize_inverse_weights(data)
    t = compute_t(data, r)
    warnings: list[str] = []
    if config.method == "auto":
        outcome, eta_used, notes = _auto(data, r, t, config.eta, config.order)
        warnings.extend(notes)
    else:
        eta_used = config.eta
        outcome = _combine(config.method, data, r, t, cluster(r, config.eta), config.order)
    warnings.extend(outcome.warnings)
    method, p, index, terms, used = outcome.method, outcome.p, outcome.index, outcome.terms, outcome.used
    truncation, hp_target = outcome.truncation, outcome.hp_target
    mc_source = outcome.mc_source if outcome.mc_source is not None else r
    mc_t = outcome.mc_t if outcome.mc_t is not None else t.t

    report: dict[str, Any] = {
        "combined_p": None,
        "method": method,
        "requested_method": config.method,
        "eta": config.eta,
        "eta_used": eta_used,
        "order": config.order,
        "t": t.t,
        "raw_t": compute_raw_t(data).t,
        "items": [{"log_p": lp, "weight": w} for lp, w in zip(data.log_p, data.weights)],
        "normalized_inverse_weights": list(r.in_input_order()),
    }

    if index > CANCELLATION_WARN:
        warnings.append(f"cancellation: about {index:.1f} significant digits lost")
    if p < 0.0:
        warnings.append("combined_p is negative: result destroyed by cancellation")

    report.update(
        combined_p=p,
        clusters=[
            {
                "center": c.center,
                "size": c.size,
                "members": list(c.members),
                "deviations": list(c.deviations),
                "sources": list(c.sources),
            }
            for c in used.clusters
        ],
        terms=terms,
        truncation_bound=truncation,
        cancellation_index=index,
    )
    if config.mc_check:
        mc = mc_estimate(mc_source, mc_t, config.mc_check, config.seed)
        report["mc"] = {
            "estimate": mc.estimate,
            "stderr": mc.standard_error,
            "samples": mc.samples,
            "seed": mc.seed,
            "shard_size": mc.shard_size,
            "generator": mc.generator,
        }
    if config.precision_digits:
        hp = float(hp_evaluate(hp_target, mc_t, config.precision_digits))
        report["hp"] = {
            "digits": config.precision_digits,
            "value": hp,
            "relative_difference": abs(p - hp) / abs(hp) if hp else None,
        }
    order_insufficient = truncation is not None and truncation > abs(p)
    report["order_insufficient"] = order_insufficient
    report["warnings"] = warnings
    report["warning_flag"] = 1 if warnings else 0
    return (EXIT_ORDER if order_insufficient else EXIT_OK), report


def format_table(report: dict[str, Any]) -> str:
    out = io.StringIO()
    w = out.write
    w(f"method            {report['method']}\n")
    w(f"combined_p        {report['combined_p']:.10g}\n")
    w(f"t = -ln(tau)      {report['t']:.10g}\n")
    w(f"cancellation      {max(report['cancellation_index'], 0.0):.2f} digits\n")
    if report.get("truncation_bound") is not None:
        w(f"truncation bound  {report['truncation_bound']:.3e}\n")
    w("\ninverse weights (normalized)\n")
    for i, v in enumerate(report["normalized_inverse_weights"]):
        w(f"  {i:3d}  {v:.10g}\n")
    w("\nclusters\n")
    for k, c in enumerate(report["clusters"]):
        w(f"  {k:3d}  center {c['center']:.8g}  n={c['size']}  spread {c['members'][-1] - c['members'][0]:.3g}\n")
    w("\nterms\n")
    for term in report["terms"]:
        label = ", ".join(f"{k}={v}" for k, v in term.items() if k != "value")
        w(f"  {term['value']: .6e}  {label}\n")
    if "mc" in report:
        mc = report["mc"]
        w(f"\nmonte carlo       {mc['estimate']:.6g} +- {mc['stderr']:.2g} ({mc['samples']} samples, seed {mc['seed']})\n")
    if "hp" in report:
        hp = report["hp"]
        w(f"\nhigh precision    {hp['value']:.10g} ({hp['digits']} digits)\n")
    for msg in report["warnings"]:
        w(f"\nWARNING: {msg}\n")
    return out.getvalue()


def _load(path: str | None, fmt: str | None) -> tuple[WeightedPValues, dict[str, Any]]:
    if fmt is None:
        fmt = "doc" if path and path.endswith((".json", ".doc")) else "csv"
    try:
        stream = sys.stdin if path in (None, "-") else open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with stream if stream is not sys.stdin else io.nullcontext(stream):
        if fmt == "csv":
            return read_csv(stream), {}
        try:
            doc = json.load(stream)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {exc.lineno}: invalid document: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise InputError("document must be an object")
        return read_document(doc)


def _verify(path: str) -> int:
    try:
        with open(path, encoding="utf-8") as fh:
            saved = json.load(fh)
        data, _ = read_document(saved)
        config = RunConfig(
            method=saved.get("requested_method", saved["method"]),
            eta=saved["eta"],
            order=saved["order"],
        )
        _, report = run(config, data)
    except (OSError, KeyError, json.JSONDecodeError, InputError, DomainError) as exc:
        print(f"error: cannot verify {path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if report["combined_p"] == saved["combined_p"]:
        print(f"verify: OK combined_p={report['combined_p']!r}")
        return EXIT_OK
    print(f"verify: MISMATCH saved {saved['combined_p']!r} recomputed {report['combined_p']!r}")
    return EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wpcombine", description="Combine independent weighted P-values.")
    ap.add_argument("--input", help="input file (CSV or JSON document); '-' or omitted reads stdin")
    ap.add_argument("--format", choices=("csv", "doc"), help="input format (default: by extension)")
    ap.add_argument("--method", choices=METHODS)
    ap.add_argument("--eta", type=float, help=f"clustering radius on the normalized scale (default {DEFAULT_ETA})")
    ap.add_argument("--order", type=int, help=f"expansion order 0..{MAX_ORDER} (default {DEFAULT_ORDER})")
    ap.add_argument("--mc-check", type=int, metavar="N", help="add a Monte Carlo check with N samples")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--precision", type=int, metavar="D", help="add a D-digit high-precision check")
    ap.add_argument("--out", help="write the JSON report here")
    ap.add_argument("--verify", metavar="PATH", help="recompute a saved report and compare")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verify:
        return _verify(args.verify)
    try:
        data, settings = _load(args.input, args.format)
        config = RunConfig(
            method=args.method or settings.get("method", "auto"),
            eta=float(args.eta if args.eta is not None else settings.get("eta", DEFAULT_ETA)),
            order=int(args.order if args.order is not None else settings.get("order", DEFAULT_ORDER)),
            mc_check=args.mc_check,
            seed=args.seed,
            precision_digits=args.precision,
            input_path=args.input,
            input_format=args.format,
            out_path=args.out,
        )
        code, report = run(config, data)
    except (InputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(format_table(report))
    if config.out_path:
        with open(config.out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
