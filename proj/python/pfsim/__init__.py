"""Steady-state power-flow backend with a device-model API.

A case is a JSON document holding the device tables ``Bus``, ``Line``,
``PQ``, ``PV``, ``Slack`` and ``Shunt``. Quantities are per unit on the
case's ``base_mva``; angles are radians.

Typical use::

    import pfsim
    ss = pfsim.load(pfsim.get_case("ieee14"))
    ss.PQ.alter("p0", "PQ_1", 0.3)
    ss.PFlow.run()
    print(ss.Bus.v.v)
"""

import json
import os

import numpy as np

__all__ = ["get_case", "list_cases", "load", "System"]

_CASE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "cases")

_SCHEMA = {
    "Bus": {"idx": None, "name": "", "Vn": 1.0},
    "Line": {"idx": None, "bus1": None, "bus2": None, "r": 0.0, "x": 0.0,
             "b": 0.0, "tap": 1.0, "phi": 0.0, "u": 1},
    "PQ": {"idx": None, "bus": None, "p0": 0.0, "q0": 0.0, "u": 1},
    "PV": {"idx": None, "bus": None, "p0": 0.0, "v0": 1.0, "u": 1},
    "Slack": {"idx": None, "bus": None, "v0": 1.0, "a0": 0.0, "u": 1},
    "Shunt": {"idx": None, "bus": None, "g": 0.0, "b": 0.0, "u": 1},
}

_TEXT_FIELDS = {"idx", "name"}


def list_cases():
    """Names of the shipped cases."""
    return sorted(f[:-5] for f in os.listdir(_CASE_DIR) if f.endswith(".json"))


def get_case(name):
    """Absolute path of a shipped case, e.g. ``get_case("ieee14")``."""
    stem = name[:-5] if name.endswith(".json") else name
    path = os.path.join(_CASE_DIR, stem + ".json")
    if not os.path.isfile(path):
        raise FileNotFoundError(
            "unknown built-in case %r; available: %s" % (name, ", ".join(list_cases())))
    return path


def load(path, setup=True):
    """Load a case file into a new :class:`System`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError("case file %r is not valid JSON: %s" % (path, exc)) from None
    if not isinstance(data, dict) or "Bus" not in data:
        raise ValueError("case file %r has no Bus table" % (path,))
    ss = System(data.get("name", os.path.basename(path)), float(data.get("base_mva", 100.0)))
    for model in _SCHEMA:
        for row in data.get(model, []):
            ss.add(model, row)
    if setup:
        ss.setup()
    return ss


class Param:
    """Column view of one device parameter; ``.v`` is the live array."""

    def __init__(self, values):
        self.v = values

    def __repr__(self):
        return "Param(%r)" % (self.v,)


class Model:
    def __init__(self, system, name):
        self._system = system
        self._name = name
        self._rows = []
        self._columns = {}

    @property
    def n(self):
        return len(self._rows)

    def _add(self, row):
        rec = dict(_SCHEMA[self._name])
        unknown = set(row) - set(rec)
        if unknown:
            raise KeyError("%s has no parameter(s) %s" % (self._name, ", ".join(sorted(unknown))))
        rec.update(row)
        if rec["idx"] is None:
            rec["idx"] = "%s_%d" % (self._name, self.n + 1)
        if rec["idx"] in self._index():
            raise KeyError("duplicate %s idx %r" % (self._name, rec["idx"]))
        self._rows.append(rec)
        self._columns = {}

    def _index(self):
        return [r["idx"] for r in self._rows]

    def _column(self, param):
        if param not in _SCHEMA[self._name]:
            raise AttributeError("%s has no parameter %r" % (self._name, param))
        if param not in self._columns:
            vals = [r[param] for r in self._rows]
            if param in _TEXT_FIELDS:
                self._columns[param] = Param(vals)
            else:
                self._columns[param] = Param(np.array(vals, dtype=float))
        return self._columns[param]

    def _sync(self):
        """Write column edits (``model.param.v[i] = x``) back into rows."""
        for param, col in self._columns.items():
            if param in _TEXT_FIELDS:
                continue
            for i, rec in enumerate(self._rows):
                if float(col.v[i]) != rec[param]:
                    rec[param] = float(col.v[i])

    def __getattr__(self, param):
        if param.startswith("_"):
            raise AttributeError(param)
        return self._column(param)

    def _position(self, idx):
        for i, r in enumerate(self._rows):
            if r["idx"] == idx:
                return i
        raise KeyError("%s idx %r not found" % (self._name, idx))

    def get(self, param, idx):
        """Value of ``param`` for device ``idx``."""
        if param not in _SCHEMA[self._name]:
            raise AttributeError("%s has no parameter %r" % (self._name, param))
        self._sync()
        return self._rows[self._position(idx)][param]

    def alter(self, param, idx, value):
        """Set ``param`` of device ``idx`` to ``value``."""
        if param in _TEXT_FIELDS or param not in _SCHEMA[self._name]:
            raise AttributeError("%s parameter %r cannot be altered" % (self._name, param))
        self._sync()
        self._rows[self._position(idx)][param] = float(value)
        self._columns = {}

    def as_dicts(self):
        self._sync()
        return [dict(r) for r in self._rows]

    def __repr__(self):
        return "<%s: %d devices>" % (self._name, self.n)


class PFlow:
    """Newton-Raphson power flow in polar coordinates."""

    def __init__(self, system, tol=1e-10, max_iter=50):
        self._system = system
        self.tol = tol
        self.max_iter = max_iter
        self.converged = False
        self.islanded = False
        self.niter = 0
        self.mismatch = float("nan")

    def run(self):
        ss = self._system
        if not ss.is_setup:
            raise RuntimeError("call setup() before PFlow.run()")
        ss._sync_all()
        self.converged = False
        self.niter = 0
        ss._solution = None
        buses = [b["idx"] for b in ss.Bus.as_dicts()]
        pos = {b: i for i, b in enumerate(buses)}
        nb = len(buses)

        lines = [l for l in ss.Line.as_dicts() if l["u"] != 0]
        slacks = [g for g in ss.Slack.as_dicts() if g["u"] != 0]
        if not slacks:
            raise RuntimeError("case has no in-service Slack device")
        slack_bus = pos[slacks[0]["bus"]]

        self.islanded = not _connected(nb, [(pos[l["bus1"]], pos[l["bus2"]]) for l in lines], slack_bus)
        if self.islanded:
            return False

        ybus = np.zeros((nb, nb), dtype=complex)
        for l in lines:
            f, t = pos[l["bus1"]], pos[l["bus2"]]
            ys = 1.0 / complex(l["r"], l["x"])
            ratio = l["tap"] * np.exp(1j * l["phi"])
            ytt = ys + 0.5j * l["b"]
            ybus[f, f] += ytt / (abs(ratio) ** 2)
            ybus[t, t] += ytt
            ybus[f, t] += -ys / np.conj(ratio)
            ybus[t, f] += -ys / ratio
        for s in ss.Shunt.as_dicts():
            if s["u"] != 0:
                ybus[pos[s["bus"]], pos[s["bus"]]] += complex(s["g"], s["b"])

        pspec = np.zeros(nb)
        qspec = np.zeros(nb)
        for d in ss.PQ.as_dicts():
            if d["u"] != 0:
                pspec[pos[d["bus"]]] -= d["p0"]
                qspec[pos[d["bus"]]] -= d["q0"]
        vmag = np.ones(nb)
        vang = np.full(nb, slacks[0]["a0"])
        pv_buses = set()
        for g in ss.PV.as_dicts():
            if g["u"] != 0:
                i = pos[g["bus"]]
                pspec[i] += g["p0"]
                vmag[i] = g["v0"]
                pv_buses.add(i)
        vmag[slack_bus] = slacks[0]["v0"]
        vang[slack_bus] = slacks[0]["a0"]
        pv_buses.discard(slack_bus)

        non_slack = [i for i in range(nb) if i != slack_bus]
        pq_buses = [i for i in non_slack if i not in pv_buses]

        for it in range(1, self.max_iter + 1):
            volt = vmag * np.exp(1j * vang)
            sinj = volt * np.conj(ybus @ volt)
            dp = pspec[non_slack] - sinj.real[non_slack]
            dq = qspec[pq_buses] - sinj.imag[pq_buses]
            mis = np.concatenate([dp, dq])
            self.mismatch = float(np.max(np.abs(mis))) if mis.size else 0.0
            if self.mismatch < self.tol:
                self.converged = True
                self.niter = it - 1
                break
            if not np.all(np.isfinite(mis)):
                break
            jac = _jacobian(ybus, volt, non_slack, pq_buses)
            try:
                dx = np.linalg.solve(jac, mis)
            except np.linalg.LinAlgError:
                break
            na = len(non_slack)
            vang[non_slack] += dx[:na]
            vmag[pq_buses] += dx[na:]
        else:
            self.niter = self.max_iter

        if self.converged:
            volt = vmag * np.exp(1j * vang)
            sinj = volt * np.conj(ybus @ volt)
            ss._solution = (vmag.copy(), vang.copy(), sinj, pos, slack_bus)
        return self.converged


def _connected(nb, edges, root):
    adj = [[] for _ in range(nb)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {root}
    stack = [root]
    while stack:
        k = stack.pop()
        for m in adj[k]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == nb


def _jacobian(ybus, volt, non_slack, pq_buses):
    ibus = ybus @ volt
    diag_v = np.diag(volt)
    diag_i = np.diag(ibus)
    vnorm = volt / np.abs(volt)
    ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
    ds_dvm = diag_v @ np.conj(ybus @ np.diag(vnorm)) + np.conj(diag_i) @ np.diag(vnorm)
    j11 = ds_dva.real[np.ix_(non_slack, non_slack)]
    j12 = ds_dvm.real[np.ix_(non_slack, pq_buses)]
    j21 = ds_dva.imag[np.ix_(pq_buses, non_slack)]
    j22 = ds_dvm.imag[np.ix_(pq_buses, pq_buses)]
    return np.block([[j11, j12], [j21, j22]])


class System:
    """A loaded case: device models plus the power-flow routine."""

    def __init__(self, name="case", base_mva=100.0):
        self.name = name
        self.base_mva = base_mva
        self.is_setup = False
        self._solution = None
        self._bus_model = Model(self, "Bus")
        self.Line = Model(self, "Line")
        self.PQ = Model(self, "PQ")
        self.PV = Model(self, "PV")
        self.Slack = Model(self, "Slack")
        self.Shunt = Model(self, "Shunt")
        self.Bus = _BusView(self)
        self.PFlow = PFlow(self)

    def _models(self):
        return {"Bus": self._bus_model, "Line": self.Line, "PQ": self.PQ,
                "PV": self.PV, "Slack": self.Slack, "Shunt": self.Shunt}

    def _sync_all(self):
        for m in self._models().values():
            m._sync()

    def add(self, model, params):
        """Add a device. Only allowed before :meth:`setup`."""
        if self.is_setup:
            raise RuntimeError("add() must be called before setup(); load the case with setup=False")
        if model not in _SCHEMA:
            raise KeyError("unknown model %r" % (model,))
        self._models()[model]._add(dict(params))

    def setup(self):
        """Validate device connectivity and freeze the device set."""
        if self.is_setup:
            return True
        buses = set(self._bus_model._index())
        for name in ("PQ", "PV", "Slack", "Shunt"):
            for r in self._models()[name].as_dicts():
                if r["bus"] not in buses:
                    raise KeyError("%s %r refers to missing bus %r" % (name, r["idx"], r["bus"]))
        for r in self.Line.as_dicts():
            for key in ("bus1", "bus2"):
                if r[key] not in buses:
                    raise KeyError("Line %r refers to missing bus %r" % (r["idx"], r[key]))
        self.is_setup = True
        return True

    def inventory(self):
        """Device identifiers and their bus connectivity."""
        out = {"Bus": [r["idx"] for r in self._bus_model.as_dicts()]}
        out["Line"] = [[r["idx"], r["bus1"], r["bus2"]] for r in self.Line.as_dicts()]
        for name in ("PQ", "PV", "Slack", "Shunt"):
            out[name] = [[r["idx"], r["bus"]] for r in self._models()[name].as_dicts()]
        return out


class _BusView:
    """Bus model plus solved voltage magnitude ``v`` and angle ``a``."""

    def __init__(self, system):
        self._system = system

    def __getattr__(self, name):
        ss = self._system
        if name in ("v", "a"):
            if ss._solution is None:
                raise RuntimeError("no power-flow solution; run ss.PFlow.run() first")
            vmag, vang = ss._solution[0], ss._solution[1]
            return Param((vmag if name == "v" else vang).copy())
        return getattr(ss._bus_model, name)


def _gen_output(ss, model, idx):
    if ss._solution is None:
        raise RuntimeError("no power-flow solution; run ss.PFlow.run() first")
    sinj, pos = ss._solution[2], ss._solution[3]
    dev = [d for d in getattr(ss, model).as_dicts() if d["idx"] == idx]
    if not dev:
        raise KeyError("%s idx %r not found" % (model, idx))
    bus = dev[0]["bus"]
    s = complex(sinj[pos[bus]])
    for d in ss.PQ.as_dicts():
        if d["u"] != 0 and d["bus"] == bus:
            s += complex(d["p0"], d["q0"])
    for d in ss.PV.as_dicts():
        if d["u"] != 0 and d["bus"] == bus and not (model == "PV" and d["idx"] == idx):
            s -= complex(d["p0"], 0.0)
    return s


def gen_power(ss, model, idx):
    """``(p, q)`` output of a Slack or PV device after a solved power flow."""
    s = _gen_output(ss, model, idx)
    return float(s.real), float(s.imag)
