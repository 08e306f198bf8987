"""End-to-end: the lab's remote client driving this server over the protocol."""

import numpy as np
import pytest

distill_lab = pytest.importorskip("distill_lab")


def test_remote_oracle_gathers_terms_from_live_server(live_server):
    host, port = live_server.address
    oracle = distill_lab.RemoteOracle(
        f"{host}:{port}", distill_lab.PromptSpec("a ripe strawberry")
    )
    with oracle:
        x = np.array([0.4, -0.2, 1.1, 0.0])
        terms = distill_lab.gather_terms(oracle, x, 0.5, np.zeros(4))
        for vec in (terms.eps_tgt, terms.eps_null, terms.eps_gnp, terms.eps_tnp):
            assert vec.shape == (4,)
            assert np.all(np.isfinite(vec))
        assert not np.array_equal(terms.eps_tgt, terms.eps_tnp)


def test_full_run_against_live_server(live_server):
    host, port = live_server.address
    cfg = distill_lab.RunConfig(
        rule=distill_lab.SdsRule(s=7.5),
        steps=15,
        seed=0,
        scene=f"{host}:{port}",
        state_dim=4,
        target_text="a ripe strawberry",
        record_every=5,
    )
    record = distill_lab.run(cfg)
    assert len(record.traces) == 3
    assert record.final_theta.shape == (4,)
    assert np.all(np.isfinite(record.final_theta))
