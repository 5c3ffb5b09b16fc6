"""Command-line front end.

    homsort elect   --config run.json --rounds 100 --out out/
    homsort permute --config run.json --d 5 --out out/
    homsort stats   --config run.json --trials 100000
    homsort cost    --n 64 --s-t 64

Configs are JSON objects whose keys mirror :class:`homsort.simnet.Scenario`
(``lambda`` is accepted for ``lam``; ``n`` is checked against the stakes).
Command-line flags override config values.  Exit status is 0 on success,
2 on a configuration error and 3 on a liveness failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional

from . import circuits as C
from . import experiments
from .chain import CHAIN_STRATEGIES
from .simnet import STRATEGIES, AdversaryProfile, LivenessViolation, Scenario, run
from .stakes import StakeTable

EXIT_CONFIG = 2
EXIT_LIVENESS = 3

SCENARIO_KEYS = {f.name for f in fields(Scenario)}
EXTRA_KEYS = {"n", "lambda", "trials", "out"}
ADVERSARY_KEYS = {"corrupted", "strategy", "chain_strategy"}


class ConfigError(ValueError):
    """A configuration problem, located at ``source:line`` when known."""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        self.source, self.line = source, line
        where = f"{source}:{line}: " if line is not None else f"{source}: " if source else ""
        super().__init__(f"{where}{message}")


class RawConfig:
    """Parsed JSON config that remembers which line each top-level key sits on."""

    def __init__(self, data: dict, text: str = "", source: str = "<defaults>"):
        self.data, self.source = data, source
        self._lines: dict[str, int] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            for m in re.finditer(r'"([A-Za-z_]+)"\s*:', line):
                self._lines.setdefault(m.group(1), lineno)

    @classmethod
    def load(cls, path: str) -> "RawConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", path, exc.lineno) from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object", path, 1)
        return cls(data, text, path)

    def line(self, key: str) -> Optional[int]:
        return self._lines.get(key)

    def error(self, key: str, message: str) -> ConfigError:
        if key in self.data:
            return ConfigError(f"{key}: {message}", self.source, self.line(key))
        return ConfigError(f"{key}: {message}")


def _int(raw: RawConfig, key: str, value, low: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise raw.error(key, f"expected an integer, got {value!r}")
    if low is not None and value < low:
        raise raw.error(key, f"must be >= {low}, got {value}")
    return value


def default_corrupted(stake_table: StakeTable) -> list[int]:
    """Highest-indexed processes whose total stake fits within s_f."""
    out, total = [], 0
    for i in reversed(stake_table.indices):
        if total + stake_table.stake(i) <= stake_table.s_f:
            out.append(i)
            total += stake_table.stake(i)
    return sorted(out)


def build_scenario(raw: RawConfig, args: argparse.Namespace) -> Scenario:
    """Merge config and flags, validating each field before any run."""
    data = dict(raw.data)
    for key in data:
        if key not in SCENARIO_KEYS | EXTRA_KEYS:
            raise raw.error(key, "unknown key")

    stakes = data.get("stakes", [1, 1, 1, 1])
    if not isinstance(stakes, list) or not stakes:
        raise raw.error("stakes", "expected a non-empty list of integers")
    for s in stakes:
        _int(raw, "stakes", s, 1)
    if "n" in data and _int(raw, "n", data["n"], 1) != len(stakes):
        raise raw.error("n", f"n={data['n']} but {len(stakes)} stakes given")

    s_f = _int(raw, "s_f", data["s_f"], 0) if "s_f" in data else (sum(stakes) - 1) // 2
    try:
        st = StakeTable(stakes, s_f)
    except ValueError as exc:
        raise raw.error("s_f" if "s_f" in data else "stakes", str(exc)) from None

    kw = {"stakes": stakes, "s_f": s_f}
    for key in ("d", "rounds", "seed", "delta_bits", "max_delay", "victim", "starve_ticks",
                "start_jitter", "tick_budget"):
        if key in data:
            kw[key] = _int(raw, key, data[key], 0)
    if "lambda" in data or "lam" in data:
        key = "lambda" if "lambda" in data else "lam"
        kw["lam"] = _int(raw, key, data[key], 1)
    for key in ("policy",):
        if key in data:
            kw[key] = data[key]
    for key in ("shuffle_rounds", "chain"):
        if key in data:
            if not isinstance(data[key], bool):
                raise raw.error(key, f"expected true/false, got {data[key]!r}")
            kw[key] = data[key]
    if "contributions" in data:
        kw["contributions"] = data["contributions"]

    adv = data.get("adversary", {})
    if isinstance(adv, str):
        adv = {"strategy": adv}
    if not isinstance(adv, dict) or set(adv) - ADVERSARY_KEYS:
        raise raw.error("adversary", f"expected an object with keys {sorted(ADVERSARY_KEYS)}")
    adv = dict(adv)

    # flags win over config
    flagged = set()
    for flag, key in (("seed", "seed"), ("d", "d"), ("rounds", "rounds"),
                      ("delta_bits", "delta_bits"), ("lam", "lam")):
        value = getattr(args, flag, None)
        if value is not None:
            kw[key] = value
            flagged.add(key)
    name = getattr(args, "adversary", None)
    if name is not None:
        if name in STRATEGIES:
            adv["strategy"] = name
        elif name in CHAIN_STRATEGIES:
            adv["chain_strategy"] = name
            kw["chain"] = True
        else:
            raise ConfigError(f"--adversary: unknown strategy {name!r}; choose from "
                              f"{sorted(set(STRATEGIES) | set(CHAIN_STRATEGIES))}")
    if adv.get("chain_strategy", "honest") != "honest":
        kw.setdefault("chain", True)
    hostile = adv.get("strategy", "honest") != "honest" or adv.get("chain_strategy", "honest") != "honest"
    if "corrupted" not in adv and hostile:
        adv["corrupted"] = default_corrupted(st)
    try:
        kw["adversary"] = AdversaryProfile(**adv)
        kw["adversary"].check(st)
    except (TypeError, ValueError) as exc:
        raise raw.error("adversary", str(exc)) from None

    sc = Scenario(**kw)
    n = st.n
    if not 1 <= sc.d <= n:
        raise _locate(raw, flagged, "d", "--d", f"d={sc.d} must be in [1, n={n}]; cannot elect more distinct "
                                         "leaders than members")
    if sc.rounds < 1:
        raise _locate(raw, flagged, "rounds", "--rounds", "must be >= 1")
    try:
        sc.circuit_config()
    except ValueError as exc:
        key = "lambda" if "lam" in str(exc) else "delta_bits"
        raise _locate(raw, flagged, key, "--" + key.replace("_", "-"), str(exc)) from None
    try:
        sc.validate()
    except ValueError as exc:
        raise _locate(raw, flagged, "policy", "--config", str(exc)) from None
    return sc


def _locate(raw: RawConfig, flagged: set, key: str, flag: str, message: str) -> ConfigError:
    alt = {"lambda": "lam"}.get(key, key)
    if alt not in flagged and (key in raw.data or alt in raw.data):
        k = key if key in raw.data else alt
        return ConfigError(f"{k}: {message}", raw.source, raw.line(k))
    return ConfigError(f"{flag}: {message}")


# -- output helpers ------------------------------------------------------------------


def write_columns(path: Path, config_hash: str, header: list[str], rows: list[list]) -> None:
    lines = [f"# config_hash={config_hash}", "\t".join(header)]
    lines += ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def format_table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _out_dir(args) -> Optional[Path]:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _voucher_hex(v: int, lam: int) -> str:
    return format(v, f"0{(lam + 3) // 4}x")


# -- commands --------------------------------------------------------------------------


def election_rows(sc: Scenario, tr) -> list[list]:
    rows = []
    for r in range(1, sc.rounds + 1):
        claim = tr.elected[r]
        ticks = max(tr.output_ticks[p][r] for p in tr.correct)
        rows.append([r, _voucher_hex(tr.voucher(r), sc.lam),
                     claim[0] if len(claim) == 1 else ",".join(map(str, claim)) or "-",
                     tr.pvouchers_per_round[r], ticks])
    return rows


def cmd_elect(sc: Scenario, out: Optional[Path], stream=None) -> list[list]:
    stream = stream or sys.stdout
    tr = run(sc)
    header = ["r", "voucher", "elected", "messages", "ticks"]
    rows = election_rows(sc, tr)
    h = sc.config_hash()
    print(f"# config_hash={h}", file=stream)
    print(format_table(header, rows), file=stream)
    if out is not None:
        tr.export(out / "transcript.jsonl")
        write_columns(out / "rounds.tsv", h, header, rows)
    return rows


def cmd_permute(sc: Scenario, out: Optional[Path], stream=None) -> list[list]:
    """Rounds are padded up to whole permutations of length d."""
    stream = stream or sys.stdout
    whole = -(-sc.rounds // sc.d) * sc.d
    if whole != sc.rounds:
        sc.rounds = whole
    tr = run(sc)
    rows = []
    for k in range(sc.rounds // sc.d):
        leaders = []
        for r in range(k * sc.d + 1, (k + 1) * sc.d + 1):
            claim = tr.elected[r]
            leaders.append(claim[0] if len(claim) == 1 else None)
        rows.append([k, " ".join(str(i) for i in leaders)])
    header = ["perm", "leaders"]
    h = sc.config_hash()
    print(f"# config_hash={h}", file=stream)
    print(format_table(header, rows), file=stream)
    if out is not None:
        tr.export(out / "transcript.jsonl")
        write_columns(out / "permutations.tsv", h, header, rows)
    return rows


def cmd_stats(sc: Scenario, trials: int, out: Optional[Path], stream=None):
    stream = stream or sys.stdout
    if trials < 1:
        raise ConfigError("--trials: must be >= 1")
    cfg = sc.circuit_config()
    h = sc.config_hash()
    print(f"# config_hash={h} trials={trials}", file=stream)
    rep = experiments.ssle_fairness(sc.stakes, trials, sc.seed, cfg, sc.s_f)
    print(rep.to_text(), file=stream)
    perm = None
    if sc.d > 1:
        perm = experiments.slp_permutations(sc.stakes, sc.d, trials, sc.seed, cfg, sc.s_f)
        print(perm.to_text(), file=stream)
    if out is not None:
        header = ["process", "stake", "count", "frequency", "expected", "z"]
        write_columns(out / "stats.tsv", h, header, [[row[k] for k in header] for row in rep.rows()])
        if perm is not None:
            cond = [[i1, j, perm.second_counts[i1].get(j, 0),
                     sc.stakes[j - 1] / (sum(sc.stakes) - sc.stakes[i1 - 1])]
                    for i1 in sorted(perm.second_counts) for j in range(1, len(sc.stakes) + 1) if j != i1]
            write_columns(out / "conditional.tsv", h, ["first", "second", "count", "expected_p"], cond)
    return rep, perm


def cmd_cost(n: int, s_t: int, out: Optional[Path], config: Optional[C.CircuitConfig] = None,
             stream=None) -> C.CostReport:
    stream = stream or sys.stdout
    if n < 1 or s_t < n:
        raise ConfigError(f"need 1 <= n <= s_t, got n={n}, s_t={s_t}")
    rep = C.cost_report(n, s_t, config)
    print(rep.to_text(), file=stream)
    if out is not None:
        rows = rep.to_rows()
        header = list(rows[0])
        write_columns(out / "cost.tsv", f"n={n},s_t={s_t}", header, [[r[k] for k in header] for r in rows])
    return rep


# -- argument parsing ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON scenario file")
    p.add_argument("--seed", type=int, help="run seed (unsigned 64-bit)")
    p.add_argument("--out", metavar="DIR", help="directory for transcript and column files")
    p.add_argument("--d", type=int, help="permutation length; 1 is plain leader election")
    p.add_argument("--rounds", type=int, help="number of rounds to run")
    p.add_argument("--adversary", metavar="NAME", help="corrupted-process strategy")
    p.add_argument("--delta-bits", dest="delta_bits", type=int, help="fixed-point randomness width")
    p.add_argument("--lambda", dest="lam", type=int, help="proof and voucher width in bits")
    p.add_argument("--trials", type=int, help="repetitions for stats")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homsort", description="Stake-weighted secret leader election")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("elect", "run leader election rounds"),
                       ("permute", "run secret leader permutations (d > 1)"),
                       ("stats", "batch fairness statistics")):
        _common(sub.add_parser(name, help=text))
    cost = sub.add_parser("cost", help="gate-count and depth report")
    _common(cost)
    cost.add_argument("--n", type=int, help="number of processes")
    cost.add_argument("--s-t", dest="s_t", type=int, help="total stake (defaults to n)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        raw = RawConfig.load(args.config) if args.config else RawConfig({})
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        out = _out_dir(args)
        if args.command == "cost":
            stakes = raw.data.get("stakes")
            n = args.n or (len(stakes) if stakes else 8)
            s_t = args.s_t or (sum(stakes) if stakes and not args.n else n)
            lam = args.lam or raw.data.get("lambda", raw.data.get("lam", 256))
            beta_x = args.delta_bits or raw.data.get("delta_bits", 64)
            cmd_cost(n, s_t, out, C.CircuitConfig.for_stake(s_t, beta_x=beta_x, lam=lam))
            return 0
        sc = build_scenario(raw, args)
        if args.command == "elect":
            cmd_elect(sc, out)
        elif args.command == "permute":
            if args.d is None and "d" not in raw.data:
                sc.d = len(sc.stakes)
            cmd_permute(sc, out)
        else:
            trials = args.trials if args.trials is not None else raw.data.get("trials", 1000)
            cmd_stats(sc, trials, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LivenessViolation as exc:
        print(f"liveness failure: {exc}", file=sys.stderr)
        return EXIT_LIVENESS
    return 0


if __name__ == "__main__":
    sys.exit(main())
