"""
Why Bob can read a phase he scrambled
=====================================

Bob sends a bright pulse whose phase he has rotated by a secret random
angle. Alice rotates it again by her key phase and sends it back. Bob undoes
his rotation and measures what is left: Alice's key phase, plus whatever the
fiber and his local oscillator added. Reading keys as the difference between
a key pulse and the reference pulse before it cancels those extras too.
"""
import numpy as np

from qpke import GlauberState, PhaseShiftGate, Scheme, run_session
from qpke.harness import presets
from qpke.phasespace import apply_phase_shift, canonicalize

# one pulse by hand
random_phase, key_phase = 2.1, np.radians(67.5)
pulse = GlauberState.from_mean_photon_number(100.0)
sent = apply_phase_shift(pulse, PhaseShiftGate(random_phase))
back = apply_phase_shift(sent, PhaseShiftGate(key_phase))
bob_sees = apply_phase_shift(back, PhaseShiftGate(random_phase).inverse())
print("key phase %.2f deg, Bob reads %.2f deg" % (np.degrees(key_phase), np.degrees(bob_sees.phase)))

# constant nuisance phases drop out of the reference/key difference
path, lo = 0.9, -0.4
key = canonicalize(key_phase + path + lo)
ref = canonicalize(0.0 + path + lo)
print("difference %.2f deg" % np.degrees(canonicalize(key - ref)))

# the same thing for a whole session with noiseless detectors
for kind, m in (("psk", 4), ("psk", 16), ("apsk", 16), ("apsk", 32)):
    res = run_session(presets.exact_cancellation(kind, m))
    print(f"{m:>2}-{kind.upper():<4} BER {res.ber:.0f} over {res.kept_key_pulses} key symbols")

print(Scheme.psk(16).labels())
