#!/usr/bin/env python3
"""Generates the feeder fixtures under feeders/.

Every fixture is produced from a fixed seed so the JSON files are
reproducible. Line data use the IEEE 4.16 kV overhead configurations
(ohm/mile, uS/mile); lengths are in feet.

Switched feeders are organised in zones: zone 0 hangs off the source, and
switch k (1-based) feeds zone k from a backbone bus of its parent zone.

    python3 tools/gen_feeders.py [outdir]
"""

import json
import sys
from pathlib import Path

import numpy as np

FT_PER_MILE = 5280.0

# Three-phase configuration (IEEE 123 config 1), ohm/mile and uS/mile.
Z3 = np.array([
    [0.4576 + 1.0780j, 0.1560 + 0.5017j, 0.1535 + 0.3849j],
    [0.1560 + 0.5017j, 0.4666 + 1.0482j, 0.1580 + 0.4236j],
    [0.1535 + 0.3849j, 0.1580 + 0.4236j, 0.4615 + 1.0651j],
])
B3 = np.array([
    [5.6765, -1.8319, -0.6982],
    [-1.8319, 5.9809, -1.1645],
    [-0.6982, -1.1645, 5.3971],
])
# Single-phase lateral (configs 9-11).
Z1 = 1.3292 + 1.3475j
B1 = 4.5193
# Two-phase lateral (config 7 style), phases taken from the 3x3 pattern.
Z2_SCALE = 1.0

PHASE_IDX = {"a": 0, "b": 1, "c": 2}


def line_matrices(phases, length_ft):
    miles = length_ft / FT_PER_MILE
    if len(phases) == 1:
        z = np.array([[Z1]]) * miles
        y = np.array([[1j * B1 * 1e-6]]) * miles
    else:
        idx = [PHASE_IDX[p] for p in phases]
        z = Z3[np.ix_(idx, idx)] * miles * Z2_SCALE
        y = 1j * B3[np.ix_(idx, idx)] * 1e-6 * miles
    return z, y


def cmat(m):
    return [[float(v.real), float(v.imag)] for v in np.asarray(m).reshape(-1)]


class Builder:
    def __init__(self, kv, kva, source_vpu, bus_prefix="n"):
        self.base = {"kv": kv, "kva": kva, "source_bus": "src", "source_vpu": source_vpu}
        self.buses = [{"id": "src", "phases": "abc", "kind": "source"}]
        self.lines = []
        self.switches = []
        self.loads = []
        self.bus_phases = {"src": "abc"}
        self.zone_of = {}
        self.prefix = bus_prefix
        self.nbus = 0
        self.nline = 0

    def new_bus(self, phases, zone, width=3):
        self.nbus += 1
        bid = f"{self.prefix}{self.nbus:0{width}d}"
        self.buses.append({"id": bid, "phases": phases, "kind": "junction"})
        self.bus_phases[bid] = phases
        self.zone_of[bid] = zone
        return bid

    def add_line(self, frm, to, phases, length_ft, line_id=None, switch_id=None):
        if line_id is None:
            self.nline += 1
            line_id = f"l{self.nline:04d}"
        z, y = line_matrices(phases, length_ft)
        ln = {"id": line_id, "from_bus": frm, "to_bus": to, "phases": phases,
              "series_impedance": cmat(z), "shunt_admittance": cmat(y)}
        if switch_id is not None:
            ln["switch_id"] = switch_id
        self.lines.append(ln)
        return line_id

    def add_switch(self, index, frm, to, length_ft=30.0):
        sid = f"sw{index + 1:02d}"
        lid = f"line_{sid}"
        self.add_line(frm, to, "abc", length_ft, line_id=lid, switch_id=sid)
        self.switches.append({"id": sid, "index": index, "line_id": lid, "default_status": "closed"})

    def add_load(self, bus, phases, p_list, q_list):
        lid = f"ld{len(self.loads) + 1:04d}"
        self.loads.append({"id": lid, "bus_id": bus, "phases": phases,
                           "nominal_p": [round(float(p), 3) for p in p_list],
                           "nominal_q": [round(float(q), 3) for q in q_list],
                           "metered": False})
        for b in self.buses:
            if b["id"] == bus:
                b["kind"] = "load"
        return lid

    def feeder(self):
        return {"base": self.base, "buses": self.buses, "lines": self.lines,
                "switches": self.switches, "loads": self.loads}


def build_zone(bld, rng, zone, root_parent, n_buses, seg_ft, lat_ft, load_menu, switch_index=None,
               backbone_frac=0.45, width=3):
    """Grows one zone below `root_parent`; returns its backbone buses."""
    root = bld.new_bus("abc", zone, width)
    if switch_index is None:
        bld.add_line(root_parent, root, "abc", float(rng.uniform(*seg_ft)))
    else:
        bld.add_switch(switch_index, root_parent, root)
    backbone = [root]
    zone_buses = [root]
    n_back = max(2, int(round(n_buses * backbone_frac)))
    while len(backbone) < n_back:
        frm = backbone[-1] if rng.random() < 0.75 else backbone[int(rng.integers(len(backbone)))]
        b = bld.new_bus("abc", zone, width)
        bld.add_line(frm, b, "abc", float(rng.uniform(*seg_ft)))
        backbone.append(b)
        zone_buses.append(b)
    laterals = []
    while len(zone_buses) < n_buses:
        if laterals and rng.random() < 0.45:
            frm = laterals[int(rng.integers(len(laterals)))]
            ph = bld.bus_phases[frm]
            if len(ph) > 1:
                ph = ph[int(rng.integers(len(ph)))]
        else:
            frm = backbone[int(rng.integers(len(backbone)))]
            r = rng.random()
            if r < 0.12:
                ph = ["ab", "bc", "ac"][int(rng.integers(3))]
            else:
                ph = "abc"[int(rng.integers(3))]
        b = bld.new_bus(ph, zone, width)
        bld.add_line(frm, b, ph, float(rng.uniform(*lat_ft)))
        laterals.append(b)
        zone_buses.append(b)
    # Loads.
    first_load = len(bld.loads)
    for b in zone_buses:
        ph = bld.bus_phases[b]
        if ph == "abc":
            if rng.random() < load_menu["p_spot"]:
                kw = load_menu["scale"] * float(rng.choice(load_menu["spot_kw"]))
                pf_q = load_menu["q_ratio"] * float(rng.uniform(0.8, 1.2))
                bld.add_load(b, "abc", [kw] * 3, [kw * pf_q] * 3)
            elif rng.random() < load_menu["p_backbone_single"]:
                p = "abc"[int(rng.integers(3))]
                kw = load_menu["scale"] * float(rng.choice(load_menu["single_kw"]))
                bld.add_load(b, p, [kw], [kw * load_menu["q_ratio"] * float(rng.uniform(0.8, 1.2))])
        else:
            if rng.random() < load_menu["p_lateral"]:
                p = ph[int(rng.integers(len(ph)))]
                kw = load_menu["scale"] * float(rng.choice(load_menu["single_kw"]))
                bld.add_load(b, p, [kw], [kw * load_menu["q_ratio"] * float(rng.uniform(0.8, 1.2))])
    # Keep every zone visible above forecast noise.
    min_kw = load_menu.get("min_zone_kw", 0.0)
    loaded = {ld["bus_id"] for ld in bld.loads[first_load:]}
    zone_kw = sum(sum(ld["nominal_p"]) for ld in bld.loads[first_load:])
    spare = [b for b in zone_buses if b not in loaded]
    while zone_kw < min_kw and spare:
        b = spare.pop(int(rng.integers(len(spare))))
        ph = bld.bus_phases[b]
        p = ph[int(rng.integers(len(ph)))]
        kw = load_menu["scale"] * float(rng.choice(load_menu["single_kw"]))
        bld.add_load(b, p, [kw], [kw * load_menu["q_ratio"] * float(rng.uniform(0.8, 1.2))])
        zone_kw += kw
    return backbone


def switched_feeder(seed, kv, kva, source_vpu, parents, zone_sizes, seg_ft, lat_ft, load_menu, head_ft, width):
    rng = np.random.default_rng(seed)
    bld = Builder(kv, kva, source_vpu)
    # Head line: src -> zone 0 root.
    root0 = bld.new_bus("abc", 0, width)
    bld.add_line("src", root0, "abc", head_ft, line_id="l0000")
    backbones = {}
    bb0 = build_zone_below(bld, rng, 0, root0, zone_sizes[0] - 1, seg_ft, lat_ft, load_menu, width)
    backbones[0] = [root0] + bb0
    for k in sorted(parents):
        parent = parents[k]
        pb = backbones[parent]
        attach = pb[int(rng.integers(1, len(pb)))] if len(pb) > 1 else pb[0]
        backbones[k] = build_zone(bld, rng, k, attach, zone_sizes[k], seg_ft, lat_ft, load_menu,
                                  switch_index=k - 1, width=width)
    return bld, rng


def build_zone_below(bld, rng, zone, root, n_buses, seg_ft, lat_ft, load_menu, width):
    """Zone 0 variant: root already exists (fed by the head line)."""
    if n_buses <= 0:
        return []
    bb = build_zone(bld, rng, zone, root, n_buses, seg_ft, lat_ft, load_menu, width=width)
    return bb


def add_loops(bld, rng, specs):
    """specs: list of (phases, zone) - adds a non-switched line between two
    non-adjacent buses of the same zone carrying `phases`."""
    existing = {(ln["from_bus"], ln["to_bus"]) for ln in bld.lines}
    existing |= {(b, a) for a, b in existing}
    for n, (phases, zone) in enumerate(specs):
        cands = [b["id"] for b in bld.buses
                 if bld.zone_of.get(b["id"]) == zone and set(phases) <= set(bld.bus_phases[b["id"]])]
        for _ in range(1000):
            a, b = rng.choice(cands, 2, replace=False)
            if (a, b) not in existing:
                break
        bld.add_line(str(a), str(b), phases, float(rng.uniform(400, 900)), line_id=f"loop{n + 1:02d}")
        existing |= {(a, b), (b, a)}


# --- fixtures -----------------------------------------------------------------

def toy4():
    bld = Builder(4.16, 3000.0, 1.0)
    n1 = bld.new_bus("abc", 0, 1)
    n2 = bld.new_bus("abc", 1, 1)
    n3 = bld.new_bus("abc", 2, 1)
    bld.add_line("src", n1, "abc", 1000.0, line_id="l1")
    bld.add_line(n1, n2, "abc", 800.0, line_id="l2", switch_id="sw1")
    bld.add_line(n1, n3, "abc", 600.0, line_id="l3", switch_id="sw2")
    bld.switches = [
        {"id": "sw1", "index": 0, "line_id": "l2", "default_status": "closed"},
        {"id": "sw2", "index": 1, "line_id": "l3", "default_status": "closed"},
    ]
    bld.add_load(n1, "abc", [60.0, 55.0, 65.0], [30.0, 25.0, 32.0])
    bld.add_load(n2, "abc", [120.0, 110.0, 100.0], [60.0, 50.0, 45.0])
    bld.add_load(n3, "b", [90.0], [40.0])
    return bld.feeder()


SMALL_MENU = {"p_spot": 0.5, "spot_kw": [40, 60, 80], "p_backbone_single": 0.6,
              "single_kw": [20, 30, 40], "p_lateral": 0.9, "q_ratio": 0.45, "scale": 1.0}


def small(nsw, seed, parents, sizes):
    bld, _ = switched_feeder(seed, 4.16, 3000.0, 1.0, parents, sizes, (200, 500), (100, 300),
                             SMALL_MENU, 500.0, 2)
    return bld.feeder()


MENU_123 = {"p_spot": 0.22, "spot_kw": [25, 35, 40, 45], "p_backbone_single": 0.75,
            "single_kw": [20, 20, 40, 40, 60], "p_lateral": 0.85, "q_ratio": 0.5,
            "scale": 0.8, "min_zone_kw": 150.0}
PARENTS_123 = {1: 0, 2: 1, 3: 0, 4: 2, 5: 1, 6: 5, 7: 4, 8: 0, 9: 8, 10: 7, 11: 2, 12: 11, 13: 10}
SIZES_123 = {0: 20, 1: 10, 2: 10, 3: 9, 4: 8, 5: 9, 6: 7, 7: 8, 8: 9, 9: 7, 10: 8, 11: 7, 12: 5, 13: 5}


def ieee123(loops=()):
    bld, rng = switched_feeder(123, 4.16, 5000.0, 1.04, PARENTS_123, SIZES_123, (250, 700), (150, 450),
                               MENU_123, 400.0, 3)
    if loops:
        add_loops(bld, np.random.default_rng(456), loops)
    return bld.feeder()


MENU_1282 = {"p_spot": 0.08, "spot_kw": [60, 90, 120], "p_backbone_single": 0.35,
             "single_kw": [5, 8, 10, 12, 15, 20, 25], "p_lateral": 0.42, "q_ratio": 0.4,
             "scale": 0.35}


def large1282():
    parents = {1: 0, 2: 0, 3: 1, 4: 1, 5: 2, 6: 3, 7: 0, 8: 4, 9: 2, 10: 7,
               11: 5, 12: 6, 13: 9, 14: 7, 15: 10, 16: 3, 17: 12, 18: 11, 19: 14, 20: 8}
    rng = np.random.default_rng(1282)
    sizes = {0: 81}
    for k in range(1, 21):
        sizes[k] = 60
    bld, _ = switched_feeder(1282, 12.47, 10000.0, 1.03, parents, sizes, (150, 500), (80, 300),
                             MENU_1282, 300.0, 4)
    return bld.feeder()


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "feeders"
    out.mkdir(parents=True, exist_ok=True)
    fixtures = {
        "toy4.json": toy4(),
        "small4sw.json": small(4, 44, {1: 0, 2: 1, 3: 0, 4: 3}, {0: 4, 1: 3, 2: 3, 3: 3, 4: 3}),
        "small6sw.json": small(6, 66, {1: 0, 2: 1, 3: 0, 4: 3, 5: 1, 6: 4},
                               {0: 4, 1: 3, 2: 3, 3: 3, 4: 3, 5: 3, 6: 3}),
        "ieee123_analog.json": ieee123(),
        "ieee123_loop1.json": ieee123(loops=[("abc", 0), ("a", 1), ("b", 2)]),
        "ieee123_loop2.json": ieee123(loops=[("abc", 0), ("a", 1), ("b", 2), ("abc", 4), ("abc", 7), ("abc", 0)]),
        "large1282_analog.json": large1282(),
    }
    for name, feeder in fixtures.items():
        (out / name).write_text(json.dumps(feeder, indent=1) + "\n")
        nl = len(feeder["loads"])
        p = sum(sum(ld["nominal_p"]) for ld in feeder["loads"])
        print(f"{name}: {len(feeder['buses'])} buses, {len(feeder['lines'])} lines, "
              f"{len(feeder['switches'])} switches, {nl} loads, {p:.0f} kW")


if __name__ == "__main__":
    main()
