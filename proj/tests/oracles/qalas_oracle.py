"""Event-by-event QALAS reference used to freeze golden values in the C++ tests.

Walks an explicit timeline: every echo and every gap is an event with a clock,
so the bookkeeping is independent of the block-level implementation.
"""

import json
import math
import sys


def timeline(tr, te_prep, esp, etl, delays):
    ev = [("prep", 0.0)]
    t = te_prep
    for j in range(etl):
        ev.append(("echo", t + (j + 1) * esp, 0))
    inv = te_prep + etl * esp
    ev.append(("inv", inv))
    for k, d in enumerate(delays):
        start = inv + d
        for j in range(etl):
            ev.append(("echo", start + (j + 1) * esp, k + 1))
    ev.append(("end", tr))
    return ev


def simulate(t1, t2, pd, b1, ie, tr=4500.0, te_prep=100.0, esp=5.8, etl=127, flip_deg=4.0,
             delays=(100.0, 1000.0, 1900.0, 2800.0), tol=1e-6, max_blocks=20):
    a = math.radians(flip_deg) * b1
    e = math.exp(-esp / t1)
    factor = (1 - e) / (1 - math.cos(a) * e)
    t1s = factor * t1
    m0s = factor * pd
    ev = timeline(tr, te_prep, esp, etl, delays)

    mz = pd
    for block in range(1, max_blocks + 1):
        start_mz = mz
        clock = 0.0
        sig = []
        prev_echo_readout = None
        for item in ev:
            kind, when = item[0], item[1]
            if kind == "prep":
                mz *= math.exp(-te_prep / t2)
                clock = te_prep
            elif kind == "echo":
                readout = item[2]
                if readout != prev_echo_readout:
                    # free recovery up to the readout start
                    start = when - esp
                    mz = pd - (pd - mz) * math.exp(-(start - clock) / t1)
                    clock = start
                    prev_echo_readout = readout
                mz = m0s - (m0s - mz) * math.exp(-(when - clock) / t1s)
                clock = when
                sig.append(mz * math.sin(a))
            elif kind == "inv":
                mz = pd - (pd - mz) * math.exp(-(when - clock) / t1)
                clock = when
                mz = -mz * ie
            elif kind == "end":
                mz = pd - (pd - mz) * math.exp(-(when - clock) / t1)
                clock = when
        change = abs(mz - start_mz) / abs(start_mz) if start_mz != 0 else abs(mz - start_mz)
        if change < tol:
            return sig, block
    raise RuntimeError("no steady state")


if __name__ == "__main__":
    sig, blocks = simulate(1000.0, 80.0, 1.0, 1.0, 0.8)
    picks = [0, 1, 63, 126, 127, 200, 254, 381, 500, 508, 634]
    json.dump({"blocks": blocks, "samples": {str(i): repr(sig[i]) for i in picks}}, sys.stdout, indent=1)
    print()
