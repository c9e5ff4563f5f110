"""Generates the 54-bus-style synthetic feeder pair used by the acceptance
suite: two substations with radial trunks, side laterals, and five fire-zone
pockets. Each pocket is a four-bus chain hanging off feeder A whose middle
segment is a sectionalizing switch outside the fire zone (e.g. an
underground run), with a normally-open tie to feeder B at the far end. Load
behind the sectionalizer can therefore be fed from either side, which halves
the flow on the exposed overhead segments without de-energizing any of them.

    python3 synthetic54.py  # writes synthetic54.json and synthetic54_fire.json
"""
import json
import math

HORIZON = 12
BASE_MVA = 1000.0
N_TRUNK = 8
N_POCKETS = 5
POCKET_LEN = 4


def profile(peak, phase=0.0):
    return [round(peak * (0.85 + 0.15 * math.sin(2 * math.pi * (t + phase) / 24)), 6) for t in range(HORIZON)]


def bus(name, p=0.0, sub=False, vref=1.0, phase=0.0):
    d = profile(p, phase) if p > 0 else [0.0] * HORIZON
    b = {"id": name, "is_substation": sub, "v_min": 0.95, "v_max": 1.05}
    if sub:
        b["v_ref"] = vref
    b["demand_p"] = d
    b["demand_q"] = [round(x * 0.3, 6) for x in d]
    return b


def line(name, a, b, fmax, sw=False, fire=False, normally_open=False, r=0.002, x=0.004):
    ln = {"id": name, "from": a, "to": b, "r": r, "x": x, "f_max": fmax, "switchable": sw, "fire_zone": fire}
    if normally_open:
        ln["normally_open"] = True
    return ln


buses = [bus("S1", sub=True), bus("S2", sub=True, vref=1.0)]
lines = []


def add_line(*args, **kw):
    lines.append(line(f"L{len(lines) + 1}", *args, **kw))


for side, sub in (("A", "S1"), ("B", "S2")):
    prev = sub
    for i in range(1, N_TRUNK + 1):
        name = f"{side}{i}"
        buses.append(bus(name, 0.003, phase=i))
        add_line(prev, name, 0.4)
        lat = f"{side}{i}L"
        buses.append(bus(lat, 0.002, phase=i + 3))
        add_line(name, lat, 0.1)
        prev = name

for k in range(1, N_POCKETS + 1):
    prev = f"A{k + 2}"
    for j in range(1, POCKET_LEN + 1):
        name = f"X{k}{j}"
        buses.append(bus(name, 0.004, phase=k + j))
        middle = j == POCKET_LEN // 2 + 1
        add_line(prev, name, 0.1, sw=middle, fire=not middle)
        prev = name
    add_line(prev, f"B{k + 2}", 0.1, sw=True, normally_open=True)

# Trunk tie between the feeder ends.
add_line(f"A{N_TRUNK}", f"B{N_TRUNK}", 0.4, sw=True, normally_open=True)

assert len(buses) == 54, len(buses)

network = {
    "name": "synthetic54",
    "base_mva": BASE_MVA,
    "horizon": HORIZON,
    "costs": {"c_energy": 10.0, "c_switch": 100.0, "c_load_loss": 1000.0},
    "defaults": {"gamma": 0.9989, "beta_fire_zone": 3.0, "beta_outside": 0.0001},
    "buses": buses,
    "lines": lines,
}

fire_ids = [ln["id"] for ln in lines if ln["fire_zone"]]
# The fire front reaches one line in three of the pockets.
schedule = {"horizon": HORIZON, "ignitions": {fire_ids[1]: 3, fire_ids[7]: 5, fire_ids[13]: 8}}

with open("synthetic54.json", "w") as f:
    json.dump(network, f, indent=1)
    f.write("\n")
with open("synthetic54_fire.json", "w") as f:
    json.dump(schedule, f, indent=1)
    f.write("\n")
