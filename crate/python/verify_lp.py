"""Cross-check exported models with an independent solver (scipy.optimize.milp).

    cargo build --release -p adamdp-cli
    python python/verify_lp.py [path/to/adamdp]

For each case the LP optimum must equal the return reported by `adamdp solve`
and the MIP optimum must equal `adamdp constrained`.
"""

import csv
import io
import re
import subprocess
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

def parse_terms(text):
    """`2 x - 0.5 y + z` -> [("x", 2.0), ("y", -0.5), ("z", 1.0)]."""
    terms, sign, coef = [], 1.0, None
    for tok in text.split():
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
        elif re.fullmatch(r"[+-]?[0-9.]+(e[+-]?[0-9]+)?", tok, re.I):
            coef = float(tok)
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
    return terms


def parse_lp(text):
    """Minimal reader for the CPLEX LP subset the exporter writes."""
    lines = []
    for raw in text.splitlines():
        if raw.startswith("\\") or not raw.strip():
            continue
        if raw.startswith("   ") and lines:
            lines[-1] += " " + raw.strip()
        else:
            lines.append(raw)
    section, objective, rows, binary = None, [], [], []
    for line in lines:
        head = line.strip()
        if head in ("Minimize", "Subject To", "Bounds", "Binary", "End"):
            section = head
            continue
        if section == "Minimize":
            objective = parse_terms(head.split(":", 1)[1])
        elif section == "Subject To":
            body = head.split(":", 1)[1]
            m = re.match(r"(.*?)(>=|<=|=)\s*(\S+)$", body)
            rows.append((parse_terms(m.group(1)), m.group(2), float(m.group(3))))
        elif section == "Binary":
            binary.append(head)
    return objective, rows, binary


def solve_model(text):
    objective, rows, binary = parse_lp(text)
    names = sorted({v for t, _, _ in rows for v, _ in t} | {v for v, _ in objective} | set(binary))
    index = {v: i for i, v in enumerate(names)}
    c = np.zeros(len(names))
    for v, k in objective:
        c[index[v]] += k
    A = np.zeros((len(rows), len(names)))
    lo = np.full(len(rows), -np.inf)
    hi = np.full(len(rows), np.inf)
    for r, (terms, sense, rhs) in enumerate(rows):
        for v, k in terms:
            A[r, index[v]] += k
        if sense in (">=", "="):
            lo[r] = rhs
        if sense in ("<=", "="):
            hi[r] = rhs
    integrality = np.array([1 if v in binary else 0 for v in names])
    lb = np.array([0.0 if v in binary else -np.inf for v in names])
    ub = np.array([1.0 if v in binary else np.inf for v in names])
    res = milp(c, constraints=LinearConstraint(A, lo, hi), integrality=integrality, bounds=Bounds(lb, ub),
               options={"mip_rel_gap": 1e-12})
    assert res.success, res.message
    return res.fun


def run(exe, *args):
    return subprocess.run([exe, *args], check=True, capture_output=True, text=True).stdout


def main():
    exe = sys.argv[1] if len(sys.argv) > 1 else "target/release/adamdp"
    failures = 0
    for eps in ("-1", "1"):
        src = ["--builtin", "toy", "--epsilon", eps]
        for theta in ("0.2", "0.5", "0.95", "1"):
            lp = solve_model(run(exe, "export", *src, "--theta", theta))
            out = run(exe, "solve", *src, "--theta", theta)
            ours = float(re.search(r"return: (\S+)", out).group(1))
            ok = abs(lp - ours) <= 1e-7
            failures += not ok
            print(f"{'ok  ' if ok else 'FAIL'} lp   eps={eps:>2} theta={theta:<4} scipy={lp:.10f} adamdp={ours:.10f}")
        for k in ("0", "1", "2", "5"):
            mip = solve_model(run(exe, "export", *src, "--format", "mip", "--k", k))
            row = next(csv.DictReader(io.StringIO(run(exe, "constrained", *src, "--k", k))))
            ours = float(row["worst_return"])
            ok = abs(mip - ours) <= 1e-7
            failures += not ok
            print(f"{'ok  ' if ok else 'FAIL'} mip  eps={eps:>2} k={k}       scipy={mip:.10f} adamdp={ours:.10f}")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
