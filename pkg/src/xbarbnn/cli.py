"""Command-line harness: verification suites, loss sweeps, inference runs,
and cost comparisons, all emitting deterministic CSV/JSON.

Precedence for every option: explicit flag > --config file entry > built-in
default. Emitted files carry the resolved-config hash and seeds in their
header so reruns are attributable.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import sys

import numpy as np

from . import bincore, cascade, costmodel, crossbar, netio

EXACT_NU_GRID = (8, 10, 12, 14, 16, 18, 20)
DEFAULT_X_GRID = (1, 2, 4, 8, 16, 24, 32, 48, 64, 96)


def _config_hash(resolved: dict) -> str:
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()[:16]


def _write_text(path, text: str) -> None:
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _resolve(args, config: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return config.get(key, default)


# ---------------------------------------------------------------- verify


def run_verification(nu_max: int = 10, progress=print) -> list[str]:
    """Exhaustive consistency suites; returns failure descriptions."""
    failures = []

    def check(name, ok, hint):
        progress(f"[{'ok' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(f"{name}: reproduce with {hint}")

    # signed dot identity, exhaustive per vector size
    ok = True
    for n in range(1, nu_max + 1):
        vals = np.arange(1 << n, dtype=np.uint32)
        bits = ((vals[:, None] >> np.arange(n)) & 1).astype(np.int8)
        signed = bits * 2 - 1
        dots = signed @ signed.T
        pops = (bits[:, None, :] == bits[None, :, :]).sum(axis=2)
        if not (2 * pops - n == dots).all():
            ok = False
            break
    check(f"xnor/popcount dot == signed dot, exhaustive nu<={nu_max}", ok, "cmd_verify dot suite")

    a = bincore.BinaryTensor.from_bits([1, 0, 0, 1])
    b = bincore.BinaryTensor.from_bits([0, 1, 1, 1])
    check("worked 4-bit example products -2", bincore.xnor_popcount_dot(a, b) == -2, "bincore example")

    # no-split crossbar equals the majority rule
    rng = np.random.default_rng(0)
    cfg = crossbar.CrossbarConfig()
    ok = True
    for _ in range(400):
        n = int(rng.integers(2, 513))
        x = bincore.BinaryTensor.from_bits(rng.integers(0, 2, n, dtype=np.uint8))
        w = bincore.BinaryTensor.from_bits(rng.integers(0, 2, n, dtype=np.uint8))
        group = crossbar.map_weights(w, cfg)
        refs = crossbar.ReferenceSet(n)
        policy = cascade.CascadePolicy("AND", refs)
        if crossbar.layer_forward(x, group, refs, policy) != bincore.golden_activation(x, w):
            ok = False
            break
    check("fitting layers match the majority rule", ok, "cmd_verify no-split suite")

    # F1 produces no false positives; F2 no false negatives (cell-exhaustive)
    ok = True
    for n in (8, 12, 16):
        seg = n // 2
        for x in range(1, seg // 2):
            refs = crossbar.ReferenceSet(seg, x, 3)
            for kind in ("F1", "F2"):
                pol = cascade.CascadePolicy(kind, refs)
                for d1, d2 in itertools.product(range(seg + 1), repeat=2):
                    r = [crossbar.sa_read(d1, refs), crossbar.sa_read(d2, refs)]
                    out = cascade.cascade(pol, r, [seg, seg])
                    golden = 2 * (d1 + d2) > n
                    if kind == "F1" and out == 1 and not golden:
                        ok = False
                    if kind == "F2" and out == 0 and golden:
                        ok = False
    check("F1 sound / F2 complete over all count cells", ok, "cmd_verify cascade suite")

    # weighted census equals the raw pair walk
    ok = True
    for n in (4, 6, 8):
        for kind in ("AND", "OR"):
            pol = cascade.CascadePolicy(kind, crossbar.ReferenceSet(n // 2))
            report = cascade.enumerate_loss(n, n // 2, pol)
            raw = _raw_pair_mismatches(n, kind)
            if report.mismatches != raw:
                ok = False
    check("pair-count census == raw exhaustive walk", ok, "cmd_verify census suite")
    return failures


def _raw_pair_mismatches(n: int, kind: str) -> int:
    """Oracle: walk every (A, B) pair as integers, no library machinery."""
    seg = n // 2
    main = seg // 2
    lo_mask = (1 << seg) - 1
    mism = 0
    for av in range(1 << n):
        for bv in range(1 << n):
            r = ~(av ^ bv) & ((1 << n) - 1)
            d1 = bin(r & lo_mask).count("1")
            d2 = bin(r >> seg).count("1")
            golden = 2 * (d1 + d2) > n
            if kind == "AND":
                out = d1 > main and d2 > main
            else:
                out = d1 > main or d2 > main
            mism += out != golden
    return mism


def cmd_verify(args) -> int:
    failures = run_verification(args.nu_max if args.nu_max is not None else 10)
    for f in failures:
        print(f, file=sys.stderr)
    return 1 if failures else 0


# ------------------------------------------------------------ loss-sweep


def cmd_loss_sweep(args) -> int:
    config = _load_config(args.config)
    mode = _resolve(args, config, "mode", "distance")
    policy_kind = _resolve(args, config, "policy", "F2")
    nu = int(_resolve(args, config, "nu", 512))
    samples = int(_resolve(args, config, "samples", 100_000))
    sigma = float(_resolve(args, config, "sigma", 0.15))
    seed = _resolve(args, config, "seed", None)
    x_grid = _resolve(args, config, "x_grid", None)
    ref_counts = _resolve(args, config, "ref_counts", (1, 3, 5, 7))

    segment = nu // 2
    resolved = {
        "command": "loss-sweep", "mode": mode, "policy": policy_kind, "nu": nu,
        "samples": samples, "sigma": sigma, "seed": seed,
        "x_grid": list(x_grid) if x_grid else None, "ref_counts": list(ref_counts),
    }
    header = [f"config_sha256={_config_hash(resolved)}", f"seed={seed}"]

    if mode == "exact":
        rows = []
        for kind in ("AND", "OR"):
            for n in EXACT_NU_GRID:
                pol = cascade.CascadePolicy(kind, crossbar.ReferenceSet(n // 2))
                rep = cascade.enumerate_loss(n, n // 2, pol)
                mc = cascade.MonteCarloLoss(
                    rep.total_pairs, rep.mismatches, rep.false_positives,
                    rep.false_negatives, rep.loss_fraction, rep.loss_fraction, rep.loss_fraction,
                )
                rows.append(cascade.SweepRow(kind, n, n // 2, 1, 0, mc))
        _write_text(args.out, cascade.sweep_rows_to_csv(rows, header))
        return 0

    if seed is None:
        print("loss-sweep: --seed is mandatory for stochastic modes", file=sys.stderr)
        return 2
    seed = int(seed)
    dist = cascade.DistSpec(sigma)
    grid = [int(x) for x in x_grid] if x_grid else list(DEFAULT_X_GRID)

    rows, rejected = [], []
    if mode == "distance":
        pol = cascade.CascadePolicy(policy_kind, crossbar.ReferenceSet(segment, grid[0], 3))
        rows, rejected = cascade.sweep_reference_distance(pol, nu, segment, grid, dist, samples, seed)
    elif mode in ("refcount", "functions"):
        kinds = ("F1", "F2") if mode == "functions" else (policy_kind,)
        for kind in kinds:
            for count in ref_counts:
                count = int(count)
                if count == 1:
                    # single reference: no auxiliary pair, so the relaxed rule
                    # degenerates to OR and the conservative one to AND
                    k1 = "OR" if kind == "F2" else "AND"
                    pol = cascade.CascadePolicy(k1, crossbar.ReferenceSet(segment))
                    r = cascade.monte_carlo_loss(pol, nu, segment, dist, samples, seed)
                    rows.append(cascade.SweepRow(k1, nu, segment, 1, 0, r))
                    continue
                pol = cascade.CascadePolicy(kind, crossbar.ReferenceSet(segment, grid[0], count))
                got, rej = cascade.sweep_reference_distance(pol, nu, segment, grid, dist, samples, seed)
                rows.extend(got)
                rejected.extend(rej)
    else:
        print(f"loss-sweep: unknown mode {mode!r}", file=sys.stderr)
        return 2
    for x, why in rejected:
        print(f"rejected x={x}: {why}", file=sys.stderr)
    _write_text(args.out, cascade.sweep_rows_to_csv(rows, header))
    return 0


# ----------------------------------------------------------------- infer


def _network_from_args(args, config) -> netio.NetworkSpec:
    name = _resolve(args, config, "network", None)
    topology = _resolve(args, config, "topology", None)
    if topology:
        return netio.parse_topology(topology)
    if name:
        return netio.named_network(name)
    raise SystemExit("need --network or --topology")


def cmd_infer(args) -> int:
    config = _load_config(args.config)
    net = _network_from_args(args, config)
    seed = _resolve(args, config, "seed", None)
    policy = _resolve(args, config, "policy", "F2")
    refs_count = int(_resolve(args, config, "refs", 3))
    distance = int(_resolve(args, config, "ref_distance", 16))
    geometry = crossbar.CrossbarConfig.parse(_resolve(args, config, "crossbar", "512x512"))

    if args.weights:
        weights = netio.WeightContainer.load(args.weights)
    else:
        if seed is None:
            print("infer: --random-weights needs --seed", file=sys.stderr)
            return 2
        weights = netio.WeightContainer.random(net, int(seed))

    if args.images and args.labels:
        images, labels = netio.DatasetSource(args.images, args.labels).load()
    else:
        if seed is None:
            print("infer: --synthetic needs --seed", file=sys.stderr)
            return 2
        rng = np.random.default_rng(int(seed) + 1)
        n = int(_resolve(args, config, "synthetic", 256))
        images = rng.integers(0, 256, (n, net.input_h, net.input_w), dtype=np.uint8)
        labels = rng.integers(0, 10, n, dtype=np.uint8)

    refs = crossbar.ReferenceSet(geometry.rows, distance if refs_count > 1 else 0, refs_count)
    backend = netio.CrossbarBackend(geometry, refs, policy)
    report = netio.run_inference(net, weights, images, labels, backend)

    resolved = {
        "command": "infer", "network": net.name, "policy": policy, "refs": refs_count,
        "ref_distance": distance, "crossbar": f"{geometry.rows}x{geometry.cols}",
        "seed": seed, "samples": int(report.samples),
    }
    payload = {"meta": {"config_sha256": _config_hash(resolved), **resolved}}
    payload.update(report.to_dict())
    _dump_json(args.out, payload)
    return 0


# ------------------------------------------------------------------ cost


def cmd_cost(args) -> int:
    config = _load_config(args.config)
    net = _network_from_args(args, config)
    refs_count = int(_resolve(args, config, "refs", 1))
    if args.params:
        try:
            params = costmodel.CostParams.from_dict(_load_config(args.params))
        except ValueError as err:
            print(f"cost: bad params file: {err}", file=sys.stderr)
            return 2
    else:
        params = costmodel.CostParams()

    proposed = costmodel.estimate_proposed(net, params, refs_count)
    baseline = costmodel.estimate_baseline(net, params)
    comp = costmodel.compare(proposed, baseline)

    resolved = {
        "command": "cost", "network": net.name, "refs": refs_count,
        "params": params.to_dict(),
    }
    payload = {
        "meta": {"config_sha256": _config_hash(resolved), "refs": refs_count},
        "proposed": proposed.to_dict(),
        "baseline": baseline.to_dict(),
        "comparison": comp.to_dict(),
    }
    _dump_json(args.out, payload)
    if args.out:
        print(
            f"{net.name}: energy x{comp.energy_improvement:.2f}, "
            f"latency x{comp.latency_improvement:.2f}"
        )
    return 0


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xbarbnn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the exhaustive consistency suites")
    v.add_argument("--nu-max", type=int, default=None, help="bound for exhaustive vector sizes")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("loss-sweep", help="exact or Monte-Carlo accuracy-loss tables")
    s.add_argument("--config", help="JSON config file; flags override its entries")
    s.add_argument("--mode", choices=("exact", "distance", "refcount", "functions"))
    s.add_argument("--policy", choices=cascade.POLICY_KINDS)
    s.add_argument("--nu", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--x-grid", dest="x_grid", type=int, nargs="+")
    s.add_argument("--ref-counts", dest="ref_counts", type=int, nargs="+")
    s.add_argument("--out", help="CSV output path (stdout when omitted)")
    s.set_defaults(func=cmd_loss_sweep)

    i = sub.add_parser("infer", help="golden vs crossbar inference accuracy")
    i.add_argument("--config")
    i.add_argument("--network", help=f"one of {', '.join(sorted(netio.TOPOLOGIES))}")
    i.add_argument("--topology", help="explicit topology line")
    i.add_argument("--weights", help="weight container file")
    i.add_argument("--random-weights", action="store_true")
    i.add_argument("--images", help="IDX image file")
    i.add_argument("--labels", help="IDX label file")
    i.add_argument("--synthetic", type=int, help="use N random samples instead of a dataset")
    i.add_argument("--crossbar", help="array geometry, e.g. 512x512")
    i.add_argument("--policy", choices=cascade.POLICY_KINDS)
    i.add_argument("--refs", type=int)
    i.add_argument("--ref-distance", dest="ref_distance", type=int)
    i.add_argument("--seed", type=int)
    i.add_argument("--out", help="JSON output path (stdout when omitted)")
    i.set_defaults(func=cmd_infer)

    c = sub.add_parser("cost", help="proposed vs baseline energy/latency")
    c.add_argument("--config")
    c.add_argument("--network")
    c.add_argument("--topology")
    c.add_argument("--params", help="JSON cost-parameter file (defaults when omitted)")
    c.add_argument("--refs", type=int)
    c.add_argument("--out", help="JSON output path (stdout when omitted)")
    c.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
