"""Command-line harness: ``wncs stability|validate-cost|train|eval|vi``.

Exit codes: 0 success, 2 not stabilizable, 3 cost validation failed,
4 configuration error.

Seeding: ``eval`` gives policy number ``j`` (in command-line order) the
generator ``default_rng([seed, j])`` for channels and policy randomness, and
``default_rng([seed, j, 1])`` for the round-robin screening runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import mdp_vi
from .config import bundled, load_config, parse_config
from .cost import cost_u, cost_x, mc_oracle, random_patterns
from .dqn import DqnPolicy, config_dict, load_model, save_model, train
from .errors import ConfigError, ScriptTooShort, VersionMismatch
from .policies import greedy_policy, link_groupings, persistent_policy, random_policy, round_robin_policy
from .simulator import run_episode
from .stability import kappa, necessary_condition

EXIT_OK, EXIT_UNSTABLE, EXIT_VALIDATION, EXIT_CONFIG = 0, 2, 3, 4


def _load(path):
    if path.startswith("builtin:"):
        return parse_config(bundled(path.split(":", 1)[1]))
    return load_config(path)


def cmd_stability(cfg, out=None):
    rep = kappa(cfg.plants, cfg.net)
    if not rep.unstable_set:
        print("no unstable plants, kappa=0")
    else:
        print(f"unstable plants: {[i + 1 for i in rep.unstable_set]}")
        print(f"kappa = {rep.kappa:.12g}")
        groups = rep.groups(cfg.net.M)
        print("best partition: " + ", ".join(
            f"f{m + 1}={{{','.join(str(i + 1) for i in sorted(g))}}}" for m, g in enumerate(groups)))
        print("stabilizable" if rep.stabilizable else "NOT stabilizable by the sufficient test")
    print(f"necessary condition holds: {necessary_condition(cfg.plants, cfg.net)}")
    record = {"kappa": rep.kappa, "stabilizable": rep.stabilizable,
              "partition": {str(i + 1): m + 1 for i, m in rep.best_partition.items()}, "config": cfg.digest}
    if out:
        with open(out, "w") as f:
            json.dump(record, f, indent=1)
    print(json.dumps(record))
    return EXIT_OK if rep.stabilizable else EXIT_UNSTABLE


def cmd_validate_cost(cfg, plant=0, patterns=10, samples=100_000, seed=0, out=None, script=None):
    p, w = cfg.plants[plant], cfg.weights[plant]
    rng = np.random.default_rng(seed)
    if script is not None:
        items = [(script, len(script), None)]
    else:
        items = random_patterns(p.v, patterns, rng)
    rows, ok = [], True
    for sc, target, _ in items:
        mx, mu, sx, su, s = mc_oracle(p, w, sc, target, samples, rng)
        jx, ju = cost_x(p, w, s), cost_u(p, w, s)
        px = abs(jx - mx) <= 3 * sx + 1e-12
        pu = abs(ju - mu) <= 3 * su + 1e-12
        ok &= px and pu
        rows.append([str(s.tau), str(s.eta), s.tail, jx, mx, sx, ju, mu, su, px and pu])
    header = ["tau", "eta", "tail", "Jx", "mc_x", "se_x", "Ju", "mc_u", "se_u", "pass"]
    print(",".join(header))
    for r in rows:
        print(",".join(f"{x:.6g}" if isinstance(x, float) else str(x) for x in r))
    if out:
        with open(out, "w", newline="") as f:
            csv.writer(f).writerows([header, *rows])
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_train(cfg, seed=None, out="model.qnet", curve_path=None, episodes=None):
    tc = cfg.dqn
    if seed is not None:
        tc.seed = seed
    if episodes is not None:
        tc.episodes = episodes
    start = time.time()
    net, curve = train(cfg.system(tc.cap), tc, np.random.default_rng(tc.seed),
                       log=lambda e, c, eps: print(f"episode {e} avg cost {c:.3f} eps {eps:.4f}",
                                                  file=sys.stderr) if e % 50 == 0 else None)
    net.meta["config"] = cfg.digest
    net.meta["train"] = config_dict(tc)
    save_model(net, out)
    curve_path = curve_path or out + ".curve.csv"
    with open(curve_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["episode", "avg_cost", "epsilon"])
        wr.writerows(curve)
    print(f"trained {tc.episodes} episodes in {time.time() - start:.1f}s -> {out}, {curve_path}")
    return EXIT_OK


def best_round_robin(system, episodes, T, rng):
    """Grouping with the lowest mean cost over a short screening run."""
    best, best_g = np.inf, None
    for g in link_groupings(system.N, system.M):
        r = run_episode(system, round_robin_policy(g), T, rng=rng, episodes=episodes, physical=False)
        m = r.empirical_avg_cost.mean()
        if m < best:
            best, best_g = m, g
    return best_g


def make_policy(spec, cfg, system, rng, screen_rng, screen_episodes=100, T=500):
    if spec == "random":
        return random_policy(cfg.net.N, cfg.net.M, rng)
    if spec == "greedy":
        return greedy_policy(cfg.net)
    if spec == "roundrobin":
        return round_robin_policy(best_round_robin(system, screen_episodes, T, screen_rng))
    if spec == "persistent":
        rep = kappa(cfg.plants, cfg.net)
        return persistent_policy(rep.best_partition, cfg.plants, cfg.net.M)
    if spec.startswith("dqn:"):
        net = load_model(spec[4:])
        if net.meta.get("config") not in (None, cfg.digest):
            raise VersionMismatch("model was trained on a different configuration")
        return DqnPolicy(net, cfg.net.N, cfg.net.M)
    if spec.startswith("vi:"):
        meta, _, table = mdp_vi.load_table(spec[3:])
        if meta.get("config") not in (None, cfg.digest):
            raise VersionMismatch("table was solved for a different configuration")
        return mdp_vi.TablePolicy(meta, table, cfg.net.N, cfg.net.M)
    raise ConfigError(f"unknown policy {spec!r}")


def cmd_eval(cfg, policies, episodes=1000, T=500, seed=0, out=None, screen_episodes=100, physical=False):
    system = cfg.system()
    header = ["policy", "mean_avg_cost", "stderr", "episodes", "seed", "cap", "config"]
    rows = []
    for j, spec in enumerate(policies):
        rng = np.random.default_rng([seed, j])
        pol = make_policy(spec, cfg, system, rng, np.random.default_rng([seed, j, 1]), screen_episodes, T)
        r = run_episode(system, pol, T, rng=rng, episodes=episodes, physical=physical)
        c = r.empirical_avg_cost
        rows.append([spec, float(c.mean()), float(c.std(ddof=1) / np.sqrt(len(c))) if len(c) > 1 else 0.0,
                     episodes, seed, system.cap, cfg.digest])
        print(f"{spec}: {rows[-1][1]:.4f} +- {rows[-1][2]:.4f}")
    if out:
        with open(out, "w", newline="") as f:
            csv.writer(f).writerows([header, *rows])
    return EXIT_OK, rows


def cmd_vi(cfg, L=4, mode="full", out="vi_table.csv", tol=1e-6):
    system = cfg.system()
    start = time.time()
    mdp = mdp_vi.build_truncated_mdp(system, L, mode)
    V, pol = mdp_vi.value_iteration(mdp, tol)
    mdp_vi.save_table(out, mdp, V, pol)
    _patch_meta(out, cfg.digest)
    start_idx = mdp.encode([np.ones((1, 2 * v + 3), dtype=np.int64) for v in mdp.vs],
                           np.ones((1, system.N), dtype=np.int8))[0]
    print(f"{mdp.n_states} states x {mdp.n_actions} actions solved in {time.time() - start:.2f}s; "
          f"value at all-ones state {V[start_idx]:.6g}; residual {mdp_vi.bellman_residual(mdp, V):.2e}")
    return EXIT_OK


def _patch_meta(path, digest):
    with open(path) as f:
        lines = f.readlines()
    meta = json.loads(lines[0][2:])
    meta["config"] = digest
    lines[0] = "# " + json.dumps(meta) + "\n"
    with open(path, "w") as f:
        f.writelines(lines)


def build_parser():
    ap = argparse.ArgumentParser(prog="wncs", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON file, or builtin:<name> for a bundled one")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        return p

    common(sub.add_parser("stability", help="kappa test and best frequency partition"))
    v = common(sub.add_parser("validate-cost", help="closed-form costs vs Monte Carlo"))
    v.add_argument("--plant", type=int, default=1, help="1-based plant index")
    v.add_argument("--patterns", type=int, default=10)
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--script", help="explicit pattern, e.g. '11,11,01,10' (beta gamma per slot)")
    t = common(sub.add_parser("train", help="train the Q-network scheduler"))
    t.add_argument("--episodes", type=int)
    t.add_argument("--curve")
    e = common(sub.add_parser("eval", help="evaluate scheduling policies"))
    e.add_argument("--policies", nargs="+", default=None)
    e.add_argument("--episodes", type=int)
    e.add_argument("--T", type=int)
    e.add_argument("--screen-episodes", type=int, default=100)
    e.add_argument("--physical", action="store_true", help="also simulate plant states")
    vi = common(sub.add_parser("vi", help="solve the truncated MDP by value iteration"))
    vi.add_argument("--L", type=int, default=4)
    vi.add_argument("--mode", choices=["full", "reduced"], default="full")
    vi.add_argument("--tol", type=float, default=1e-6)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args.config)
        if args.cmd == "stability":
            return cmd_stability(cfg, args.out)
        if args.cmd == "validate-cost":
            script = None
            if args.script:
                script = [(c[0] == "1", c[1] == "1") for c in args.script.split(",")]
            return cmd_validate_cost(cfg, args.plant - 1, args.patterns, args.samples, args.seed, args.out, script)
        if args.cmd == "train":
            return cmd_train(cfg, args.seed, args.out or "model.qnet", args.curve, args.episodes)
        if args.cmd == "eval":
            ev = cfg.evaluation
            code, _ = cmd_eval(cfg, args.policies or ev.get("policies", ["greedy"]),
                               args.episodes or ev.get("episodes", 1000), args.T or ev.get("T", 500),
                               args.seed, args.out, args.screen_episodes, args.physical)
            return code
        if args.cmd == "vi":
            return cmd_vi(cfg, args.L, args.mode, args.out or "vi_table.csv", args.tol)
    except ScriptTooShort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, VersionMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
