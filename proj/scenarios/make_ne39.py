#!/usr/bin/env python3
"""Regenerates the bundled New England 39-bus scenario files.

Network data (line reactances, loads, generator voltage setpoints, machine
constants) follows the standard published 39-bus set on a 100 MVA base.
Lines are kept lossless; load damping, machine damping, turbine time
constants and controller gains are desk-scale reconstructions chosen for the
fixed-step integrator, documented in the README.
"""
import json
import math
import copy

BASE = 100.0
OMEGA_S = 2 * math.pi * 60.0

lines = [
    (1, 2, 0.0411), (1, 39, 0.0250), (2, 3, 0.0151), (2, 25, 0.0086), (2, 30, 0.0181),
    (3, 4, 0.0213), (3, 18, 0.0133), (4, 5, 0.0128), (4, 14, 0.0129), (5, 6, 0.0026),
    (5, 8, 0.0112), (6, 7, 0.0092), (6, 11, 0.0082), (6, 31, 0.0250), (7, 8, 0.0046),
    (8, 9, 0.0363), (9, 39, 0.0250), (10, 11, 0.0043), (10, 13, 0.0043), (10, 32, 0.0200),
    (12, 11, 0.0435), (12, 13, 0.0435), (13, 14, 0.0101), (14, 15, 0.0217), (15, 16, 0.0094),
    (16, 17, 0.0089), (16, 19, 0.0195), (16, 21, 0.0135), (16, 24, 0.0059), (17, 18, 0.0082),
    (17, 27, 0.0173), (19, 20, 0.0138), (19, 33, 0.0142), (20, 34, 0.0180), (21, 22, 0.0140),
    (22, 23, 0.0096), (22, 35, 0.0143), (23, 24, 0.0350), (23, 36, 0.0272), (25, 26, 0.0323),
    (25, 37, 0.0232), (26, 27, 0.0147), (26, 28, 0.0474), (26, 29, 0.0625), (28, 29, 0.0151),
    (29, 38, 0.0156),
]

loads = {  # bus: (MW, MVAr)
    3: (322.0, 2.4), 4: (500.0, 184.0), 7: (233.8, 84.0), 8: (522.0, 176.0),
    12: (8.5, 88.0), 15: (320.0, 153.0), 16: (329.0, 32.3), 18: (158.0, 30.0),
    20: (680.0, 103.0), 21: (274.0, 115.0), 23: (247.5, 84.6), 24: (308.6, -92.2),
    25: (224.0, 47.2), 26: (139.0, 17.0), 27: (281.0, 75.5), 28: (206.0, 27.6),
    29: (283.5, 26.9), 31: (9.2, 4.6), 39: (1104.0, 250.0),
}

# bus: (H, x_d, x'_d, T'_d0, |V| setpoint)
gens = {
    30: (42.0, 0.100, 0.031, 10.2, 1.0475),
    31: (30.3, 0.295, 0.0697, 6.56, 0.9820),
    32: (35.8, 0.2495, 0.0531, 5.70, 0.9831),
    33: (28.6, 0.262, 0.0436, 5.69, 0.9972),
    34: (26.0, 0.670, 0.1320, 5.40, 1.0123),
    35: (34.8, 0.254, 0.0500, 7.30, 1.0493),
    36: (26.4, 0.295, 0.0490, 5.66, 1.0635),
    37: (24.3, 0.290, 0.0570, 6.70, 1.0278),
    38: (34.5, 0.2106, 0.0570, 4.79, 1.0265),
    39: (500.0, 0.020, 0.0060, 7.00, 1.0300),
}

controllable = [32, 36, 38, 39]
costs = {32: (0.00009, 0.032), 36: (0.00014, 0.030), 38: (0.00010, 0.032), 39: (0.00008, 0.032)}
limits = {32: (0.0, 1000.0), 36: (0.0, 1000.0), 38: (0.0, 850.0), 39: (0.0, 1080.0)}
ug_dispatch = {30: 350.0, 33: 632.0, 34: 508.0, 35: 650.0, 37: 400.0, 31: 0.0}  # 31 is slack
CG_TOTAL = 3114.0  # pre-disturbance optimal share of the controllable fleet

D_LOAD = 2.0     # frequency-sensitive load coefficient, p.u. / (rad/s)
D_MACH = 0.3     # machine damping for the nine unit-scale machines
D_BIG = 2.0      # the aggregated unit at bus 39
T_TURB = 2.0
K_OMEGA = 0.5
K_E = 1.0

GAINS = {"k_pg": 6.0, "k_mu": 3.0, "k_z": 2.0, "k_gamma": 2.0, "tau": 2.0}


def base_doc():
    buses = []
    for b in range(1, 40):
        p, q = loads.get(b, (0.0, 0.0))
        buses.append({"id": b, "p_mw": p, "q_mvar": q, "d_load": D_LOAD})
    machines = []
    for bus, (h, xd, xdp, td0, vset) in sorted(gens.items()):
        m = {
            "bus": bus,
            "m": round(2.0 * h / OMEGA_S, 6),
            "d": D_BIG if bus == 39 else D_MACH,
            "t_turb": T_TURB,
            "t_d0p": td0,
            "x_d": xd,
            "x_dp": xdp,
            "k_omega": K_OMEGA,
            "k_e": K_E,
            "v_set": vset,
            "controllable": bus in controllable,
        }
        if bus in controllable:
            m["p_min_mw"] = limits[bus][0]
            m["p_max_mw"] = limits[bus][1]
        else:
            m["dispatch_mw"] = ug_dispatch[bus]
        if bus == 31:
            m["slack"] = True
        machines.append(m)
    return {
        "name": "ne39",
        "base_mva": BASE,
        "network": {
            "buses": buses,
            "lines": [{"from": a, "to": b, "x": x} for a, b, x in lines],
            "comm_edges": [[32, 36], [36, 38], [38, 39], [39, 32]],
        },
        "machines": machines,
        "controller": {
            "variant": "measured",
            "gains": GAINS,
            "costs": [{"bus": b, "a": costs[b][0], "b": costs[b][1]} for b in controllable],
            "cg_dispatch_total_mw": CG_TOTAL,
            "agc": {"k_f_mw_per_hz": 9000.0, "shares": {str(b): 0.25 for b in controllable}},
        },
        "events": [],
        "sim": {
            "dt": 0.002,
            "t_end": 150.0,
            "record_dt": 0.05,
            "steady_window": 5.0,
            "steady_tol": 1e-6,
        },
        "outputs": {"dir": "out/ne39"},
    }


def stage1_events(at=10.0):
    return [{"at": at, "kind": "load_step", "bus": b, "dp_mw": 60.0} for b in (3, 15, 23, 24, 25)]


def emit(name, doc):
    with open(name, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    print("wrote", name)


doc = base_doc()
doc["events"] = stage1_events()
doc["outputs"]["dir"] = "out/ne39"
emit("ne39.json", doc)

doc = base_doc()
doc["name"] = "ne39_twostage"
doc["events"] = stage1_events() + [{"at": 70.0, "kind": "load_step", "bus": 23, "dp_mw": 120.0}]
doc["sim"]["t_end"] = 220.0
doc["outputs"]["dir"] = "out/ne39_twostage"
emit("ne39_twostage.json", doc)

doc = base_doc()
doc["name"] = "ne39_capacity"
doc["events"] = [{"at": 10.0, "kind": "load_step", "bus": b, "dp_mw": 112.0}
                 for b in (3, 15, 23, 24, 25)]
doc["sim"]["t_end"] = 150.0
doc["outputs"]["dir"] = "out/ne39_capacity"
emit("ne39_capacity.json", doc)

doc = base_doc()
doc["name"] = "ne39_gtrip"
doc["events"] = [{"at": 10.0, "kind": "generator_trip", "bus": 32}]
doc["sim"]["t_end"] = 150.0
doc["outputs"]["dir"] = "out/ne39_gtrip"
emit("ne39_gtrip.json", doc)

doc = base_doc()
doc["name"] = "ne39_fault"
doc["events"] = [
    {"at": 10.0, "kind": "line_trip", "from": 4, "to": 14},
    {"at": 60.0, "kind": "line_reclose", "from": 4, "to": 14},
]
doc["sim"]["t_end"] = 200.0
doc["outputs"]["dir"] = "out/ne39_fault"
emit("ne39_fault.json", doc)
