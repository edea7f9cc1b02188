"""HTTP facade over one embedded engine."""

import pytest
from fastapi.testclient import TestClient

from epochkv import EngineConfig
from epochkv.service.app import create_app


@pytest.fixture
def client():
    app = create_app(EngineConfig(epoch_period_ms=0))
    with TestClient(app) as c:
        yield c


def make_table(client, name="t"):
    res = client.post("/tables", json={"name": name})
    assert res.status_code == 200, res.text
    return res.json()["table_id"]


def begin(client, **kw):
    res = client.post("/txs", json=kw)
    assert res.status_code == 200, res.text
    return res.json()


def test_create_and_list_tables(client):
    tid = make_table(client, "alpha")
    make_table(client, "beta")
    res = client.get("/tables")
    names = [t["name"] for t in res.json()]
    assert names == ["alpha", "beta"]
    assert res.json()[0]["table_id"] == tid


def test_duplicate_table_rejected(client):
    make_table(client, "dup")
    res = client.post("/tables", json={"name": "dup"})
    assert res.status_code == 409
    assert res.json()["error"] == "TableExists"


def test_bad_mode_rejected(client):
    res = client.post("/txs", json={"mode": "strange"})
    assert res.status_code == 400
    assert res.json()["error"] == "BadMode"


def test_occ_roundtrip(client):
    tid = make_table(client)
    tx = begin(client, mode="occ")
    assert tx["mode"] == "occ" and tx["valid_epoch"] is None
    num = tx["tx"]
    w = client.post(f"/txs/{num}/write", json={"table": tid, "key": "6b", "value": "76"})
    assert w.status_code == 200
    r = client.post(f"/txs/{num}/read", json={"table": tid, "key": "6b"})
    assert r.json() == {"found": True, "value": "76"}
    c = client.post(f"/txs/{num}/commit")
    body = c.json()
    assert body["status"] == "committed"
    assert len(body["slot"]) == 3


def test_absent_read(client):
    tid = make_table(client)
    num = begin(client)["tx"]
    r = client.post(f"/txs/{num}/read", json={"table": tid, "key": "dead"})
    assert r.json() == {"found": False, "value": None}
    client.post(f"/txs/{num}/abort")


def test_scan_bounds(client):
    tid = make_table(client)
    num = begin(client)["tx"]
    for key, val in (("61", "31"), ("62", "32"), ("63", "33")):
        client.post(f"/txs/{num}/write", json={"table": tid, "key": key, "value": val})
    client.post(f"/txs/{num}/commit")
    num2 = begin(client)["tx"]
    res = client.post(f"/txs/{num2}/scan", json={"table": tid, "lo": "61", "hi": "63"})
    assert res.json()["rows"] == [["61", "31"], ["62", "32"]]
    client.post(f"/txs/{num2}/abort")


def test_delete_roundtrip(client):
    tid = make_table(client)
    num = begin(client)["tx"]
    client.post(f"/txs/{num}/write", json={"table": tid, "key": "6b", "value": "76"})
    client.post(f"/txs/{num}/commit")
    num2 = begin(client)["tx"]
    client.post(f"/txs/{num2}/delete", json={"table": tid, "key": "6b"})
    client.post(f"/txs/{num2}/commit")
    num3 = begin(client)["tx"]
    r = client.post(f"/txs/{num3}/read", json={"table": tid, "key": "6b"})
    assert r.json()["found"] is False


def test_unknown_tx_404(client):
    res = client.post("/txs/9999/read", json={"table": 0, "key": "6b"})
    assert res.status_code == 404
    assert res.json()["error"] == "UnknownTx"


def test_unknown_table_404(client):
    num = begin(client)["tx"]
    res = client.post(f"/txs/{num}/write", json={"table": 42, "key": "6b", "value": "76"})
    assert res.status_code == 404
    assert res.json()["error"] == "UnknownTable"


def test_bad_hex_422(client):
    tid = make_table(client)
    num = begin(client)["tx"]
    res = client.post(f"/txs/{num}/write", json={"table": tid, "key": "zz", "value": "76"})
    assert res.status_code == 422


def test_readonly_write_400(client):
    tid = make_table(client)
    num = begin(client, mode="readonly")["tx"]
    res = client.post(f"/txs/{num}/write", json={"table": tid, "key": "6b", "value": "76"})
    assert res.status_code == 400
    assert res.json()["error"] == "ReadOnlyViolation"


def test_ltx_flow_with_reservation(client):
    tid = make_table(client)
    tx = begin(client, mode="ltx", wp_tables=[tid])
    assert isinstance(tx["valid_epoch"], int)
    num = tx["tx"]
    res = client.post(f"/txs/{num}/write", json={"table": tid, "key": "6b", "value": "76"})
    assert res.status_code == 200
    out = client.post(f"/txs/{num}/commit").json()
    assert out["status"] == "committed"


def test_ltx_write_outside_reservation_400(client):
    a = make_table(client, "a")
    b = make_table(client, "b")
    num = begin(client, mode="ltx", wp_tables=[a])["tx"]
    res = client.post(f"/txs/{num}/write", json={"table": b, "key": "6b", "value": "76"})
    assert res.status_code == 400
    assert res.json()["error"] == "WpMismatch"


def test_poll_and_double_abort(client):
    num = begin(client)["tx"]
    assert client.post(f"/txs/{num}/poll").json() is None
    first = client.post(f"/txs/{num}/abort").json()
    assert first["status"] == "aborted"
    # finished results outlive the handle: idempotent abort and poll
    assert client.post(f"/txs/{num}/abort").json() == first
    assert client.post(f"/txs/{num}/poll").json() == first
    # double commit of a finished tx conflicts
    res = client.post(f"/txs/{num}/commit")
    assert res.status_code == 404  # handle retired; only the result remains


def test_epoch_endpoints(client):
    info = client.get("/epoch").json()
    assert set(info) == {"current", "safe", "durable"}
    bumped = client.post("/epoch/advance").json()
    assert bumped["current"] == info["current"] + 1
    cls = client.get(f"/epoch/classify/{info['current']}").json()
    assert cls["classification"] in ("Safe", "Unsafe")


def test_trace_and_digest(client):
    tid = make_table(client)
    num = begin(client)["tx"]
    client.post(f"/txs/{num}/write", json={"table": tid, "key": "6b", "value": "76"})
    client.post(f"/txs/{num}/commit")
    trace = client.get("/trace").text
    assert trace.splitlines()[0].startswith("begin")
    digest = client.get("/digest").json()
    assert len(digest["content"]) == 64 and len(digest["writer"]) == 64


def test_oracle_check_round(client):
    tid = make_table(client)
    for i in range(3):
        num = begin(client)["tx"]
        client.post(f"/txs/{num}/write", json={"table": tid, "key": "6b", "value": "%02x" % i})
        client.post(f"/txs/{num}/commit")
    res = client.post("/oracle/check", json={})
    body = res.json()
    assert body["witness_ok"] is True
    assert body["mvsr_ok"] is True
    assert body["replay_digest"]


def test_oracle_check_external_trace(client):
    bad = (
        "begin 1 - - - -\n"
        "write 1 0 6b - -\n"
        "commit 1 - - - 1.1.1\n"
        "begin 2 - - - -\n"
        "read 2 0 6b 9 -\n"
        "commit 2 - - - 1.1.2\n"
    )
    body = client.post("/oracle/check", json={"trace": bad}).json()
    assert body["witness_ok"] is False
    assert body["violations"]


def test_oracle_check_malformed_400(client):
    res = client.post("/oracle/check", json={"trace": "begin x - - - -\n"})
    assert res.status_code == 400
    assert res.json()["error"] == "MalformedHistory"


def test_health(client):
    out = client.get("/health").json()
    assert out["status"] == "ok" and out["halted"] is False
    assert out["live_txs"] == 0
    begin(client)
    assert client.get("/health").json()["live_txs"] == 1
