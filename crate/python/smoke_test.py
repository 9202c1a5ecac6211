"""Quick end-to-end check of the secvnf Python bindings."""

import math

import secvnf


def main():
    assert secvnf.wire_size("udp", 512) == 540
    assert secvnf.wire_size("udp", 512, tunneled=True) == 576

    rule = secvnf.Rule.parse(
        'alert tcp $EXTERNAL_NET any -> $HOME_NET 445 (msg:"Exploit Detected!"; '
        "flow:to_server,established; classtype:attempted-admin; priority:10; sid:2094284; rev:2;)"
    )
    assert (rule.action, rule.proto, rule.sid, rule.rev, rule.priority) == ("alert", "tcp", 2094284, 2, 10)
    assert rule.flow == ["to_server", "established"]
    assert secvnf.Rule.parse(str(rule)) == rule

    rules = secvnf.RuleSet.sample()
    assert len(rules) == 4
    assert rules.match("icmp", "10.0.0.2", 0, "192.168.122.10", 80) == [(1000004, "alert"), (1000001, "alert")]
    assert rules.match("udp", "10.0.0.2", 40000, "192.168.122.10", 80) == []
    try:
        secvnf.RuleSet('alert udp any any -> any any (msg:"a"; sid:7;)\nalert udp any any -> any any (msg:"b"; sid:7;)')
    except ValueError as e:
        assert "line 2" in str(e)
    else:
        raise AssertionError("duplicate sid accepted")

    nat = secvnf.NatTable("192.168.122.1", capacity=2, idle_timeout_s=30.0)
    out = nat.outbound("udp", "10.0.0.2", 40000, "192.168.122.10", 53)
    assert out == ("192.168.122.1", 1024, "192.168.122.10", 53)
    back = nat.inbound("udp", "192.168.122.10", 53, "192.168.122.1", 1024)
    assert back == ("192.168.122.10", 53, "10.0.0.2", 40000)
    nat.outbound("udp", "10.0.0.3", 40000, "192.168.122.10", 53)
    try:
        nat.outbound("udp", "10.0.0.4", 40000, "192.168.122.10", 53)
    except ValueError:
        pass
    else:
        raise AssertionError("NAT accepted a flow beyond capacity")
    assert nat.expire(31.0) == 2 and nat.free_ports("udp") == 64512

    mean, hw = secvnf.confidence_interval([0.0, 2.0])
    assert mean == 1.0 and abs(hw - 12.706204736174698) < 1e-9
    assert math.isclose(secvnf.mm1k_loss(1.0, 10), 1 / 11)

    verdict = secvnf.qos_check("discrete automation", 8.0, 12e6, 0.01)
    assert verdict == {"latency": True, "rate": True, "reliability": True, "passed": True}
    assert not secvnf.qos_check("its_backhaul", 8.0, 12e6, 0.1)["reliability"]

    res = secvnf.simulate("scenario2_ips", 20000.0, duration_s=0.2, reps=3, seed=7)
    assert res["n"] == 3 and len(res["reps"]) == 3
    assert res["drop_pct"] == 0.0 and res["latency_us"] > 0
    again = secvnf.simulate("scenario2_ips", 20000.0, duration_s=0.2, reps=3, seed=7)
    assert [r["trace_hash"] for r in res["reps"]] == [r["trace_hash"] for r in again["reps"]]
    overload = secvnf.simulate("scenario2_ips", 150000.0, duration_s=0.2, reps=2)
    assert overload["drop_pct"] > 5.0

    (rho, offered, simulated, analytic), = secvnf.validate_oracle([1.0], k=5, seeds=2, packets_per_seed=20000)
    assert offered == 40000 and abs(simulated - analytic) < 0.02

    print("secvnf smoke test ok: latency %.1f us, overload drop %.1f%%" % (res["latency_us"], overload["drop_pct"]))


if __name__ == "__main__":
    main()
