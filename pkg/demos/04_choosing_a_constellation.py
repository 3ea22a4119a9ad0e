"""
How many phases, and how many references
========================================

More phases per symbol pack more bits but shrink the decision cells. Bob's
two-measurement error stays small enough for 16 or 32 phases while the
tapping attacker's four-measurement error does not. A secret list of
reference phases pushes the attacker towards chance while costing Bob
nothing.
"""
from qpke import run_session
from qpke.config import with_override
from qpke.harness import presets
from qpke.harness.sweep import aggregate, run_sweep

base, spec = presets.phase_count(replications=2, pulses=100_000)
rows = run_sweep(spec, base)
phases, bob = aggregate(rows, "ber")
_, eve = aggregate(rows, "attacker_ber")
for m, b, e in zip(phases, bob, eve):
    print(f"{m:>2}-PSK  Bob BER {b:.4f}  attacker BER {e:.4f}  spacing {360 / m:.2f} deg")

for size in (1, 2, 4, 8):
    cfg = with_override(presets.dynamic_reference(200_000), "reference.list_size", size)
    res = run_session(cfg)
    print(f"reference list of {size}: Bob BER {res.ber:.4f}  attacker BER {res.attack.attacker_ber_vs_alice:.4f}")
