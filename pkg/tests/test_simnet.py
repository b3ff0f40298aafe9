import json

import numpy as np
import pytest

from socoswarm.acord import KtPolicy, run_acord
from socoswarm.baselines import LpcConfig, run_lpc
from socoswarm.graph import build_d_regular
from socoswarm.instance import random_quadratic_instance
from socoswarm.simnet import CommLog, Harness, LocalityError, Message, deliver, summarize, write_summary_json


def test_deliver_rules():
    ring = build_d_regular(5, 2)
    log = CommLog(5)
    assert deliver(log, Message(1, 1, 0, 1, 1, "action"), ring)
    assert not deliver(log, Message(1, 1, 0, 2, 1, "action"), ring)
    assert not deliver(log, Message(1, 1, 0, 0, 1, "crawl"), ring)
    assert not deliver(log, Message(1, 0, 0, 2, 3, "function"), ring)  # no radius declared
    assert deliver(log, Message(1, 0, 0, 2, 3, "function"), ring, r=2)
    assert not deliver(log, Message(1, 0, 0, 2, 3, "function"), ring, r=1)
    assert log.count(kind="function") == 2
    assert log.count(kind="function", hop_weighted=False) == 1
    assert len(log) == 2
    with pytest.raises(ValueError):
        deliver(log, Message(1, 1, 0, 1, 1, "gossip"), ring)


def test_harness_rejects_nonlocal():
    ring = build_d_regular(6, 2)
    inst = random_quadratic_instance(np.random.default_rng(0), 6, 1, [ring])
    h = Harness(inst)
    with pytest.raises(LocalityError):
        h.send(Message(1, 1, 0, 3, 1, "action"))
    with pytest.raises(LocalityError):
        h.ship_functions(1, 0, [3], payload_dim=3, r=2)
    with pytest.raises(LocalityError):
        h.exchange(1, 1, np.zeros(6), kind="function")
    h.ship_functions(1, 0, [0, 1, 2], payload_dim=3, r=2)
    assert h.log.count(kind="function") == 1 + 2


def test_exchange_delivers_neighbour_values():
    ring = build_d_regular(5, 2)
    inst = random_quadratic_instance(np.random.default_rng(0), 5, 1, [ring])
    h = Harness(inst)
    vals = np.arange(5.0)[:, None]
    got = h.exchange(1, 1, vals)
    src, dst, _ = h.channels(1)
    assert np.array_equal(got[:, 0], src.astype(float))
    assert all(ring.has_edge(m.src, m.dst) for m in h.log)


def test_acord_message_count_ring():
    ring = build_d_regular(20, 2)
    inst = random_quadratic_instance(np.random.default_rng(1), 20, 2, [ring], beta=1.0)
    _, _, log = run_acord(inst, KtPolicy.fixed(12))
    assert log.count(kind="action", round=1) == 2 * 20 * 12
    assert log.kinds() == {"action"}
    assert log.payload_dims("action") == {1}


def test_lpc_log_has_function_payloads():
    ring = build_d_regular(8, 2)
    inst = random_quadratic_instance(np.random.default_rng(2), 8, 2, [ring], beta=1.0)
    _, _, log = run_lpc(inst, LpcConfig(2, 1))
    assert log.kinds() == {"function"}
    hops = {m.hops for m in log}
    assert hops == {1, 2}
    # per agent and round: 2 neighbours at 1 hop and 2 at 2 hops
    assert log.count(round=1) == 8 * (2 * 1 + 2 * 2)


def test_summary_and_csv(tmp_path):
    assert summarize(CommLog(3)) == {
        "messages_per_round": {},
        "messages_total": 0,
        "dims_total": 0,
        "ops_per_agent": {},
        "time_per_agent": {},
    }
    ring = build_d_regular(5, 2)
    inst = random_quadratic_instance(np.random.default_rng(3), 5, 3, [ring], d=2, beta=1.0)
    _, _, log = run_acord(inst, KtPolicy.fixed(4))
    s = summarize(log)
    assert s["messages_total"] == 3 * 2 * 5 * 4
    assert s["dims_total"] == 2 * s["messages_total"]
    assert set(s["ops_per_agent"]) == set(range(5))
    assert s["time_per_agent"]["acord"] > 0
    log.to_csv(tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + len(log)
    doc = write_summary_json(log, tmp_path / "s.json", algo="acord", N=5, D=2, beta=1.0, T=3)
    assert json.loads((tmp_path / "s.json").read_text()) == doc
    assert set(doc) == {"algo", "N", "D", "beta", "T", "messages", "dims", "tau_per_agent"}
