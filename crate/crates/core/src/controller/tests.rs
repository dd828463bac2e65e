use super::*;
use crate::chunkstore::{read_index, verify_merge, write_index, FetchedChunk};
use crate::node_agent::{encode_report, NodeLoad, MB};
use crate::selection::TopsisSelector;
use crate::topology::load_topology;

const RING: &str = r#"{
    "switches": ["s1", "s2", "s3", "s4"],
    "hosts": [
        {"id": "ctl", "ip": "10.0.0.1", "role": "controller", "switch": "s1"},
        {"id": "client", "ip": "10.0.0.10", "role": "client", "switch": "s1"},
        {"id": "node1", "ip": "10.0.0.2", "role": "storage", "switch": "s2", "storage": {"v_total_mb": 4096}},
        {"id": "node2", "ip": "10.0.0.3", "role": "storage", "switch": "s3", "storage": {"v_total_mb": 4096}},
        {"id": "node3", "ip": "10.0.0.4", "role": "storage", "switch": "s4", "storage": {"v_total_mb": 4096}}
    ],
    "links": [
        {"a": "s1", "b": "s2", "capacity_mbps": 100, "delay_ms": 2},
        {"a": "s2", "b": "s3", "capacity_mbps": 100, "delay_ms": 2},
        {"a": "s3", "b": "s4", "capacity_mbps": 100, "delay_ms": 2},
        {"a": "s4", "b": "s1", "capacity_mbps": 100, "delay_ms": 2}
    ],
    "control_channel": {"delay_ms": 0.5}
}"#;

fn controller() -> Controller {
    let topo = Arc::new(load_topology(RING).unwrap());
    Controller::new(topo, Box::new(TopsisSelector::default()), ControllerConfig::default())
}

fn snapshot(c: &Controller, t: f64) -> Snapshot {
    let mut states = nominal_states(&c.topo);
    for s in states.values_mut() {
        s.measured_at = t;
    }
    Snapshot { measured_at: t, states }
}

fn report(ip: &str, v: u64, l: f64) -> Packet {
    let load = NodeLoad { node: "x".into(), v_remaining: v, v_total: 0, l_disk_io: l, c_cpu: 10.0, r_mem: 30.0, sampled_at: 0.0 };
    Packet { src_ip: ip.into(), dst_ip: "10.0.0.1".into(), payload: encode_report(&load) }
}

fn store_packet(name: &str, bytes: u64) -> Packet {
    Packet { src_ip: "10.0.0.10".into(), dst_ip: "10.0.0.1".into(), payload: encode_store_request(name, bytes) }
}

fn primed(t: f64) -> Controller {
    let mut c = controller();
    c.on_snapshot(snapshot(&c, t));
    // node2 has the most space but the busiest disk and the longest path.
    for (ip, v, l) in [("10.0.0.2", 2048, 10.0), ("10.0.0.3", 3000, 50.0), ("10.0.0.4", 2048, 20.0)] {
        c.handle_packet_in(&report(ip, v, l), t);
    }
    c
}

#[test]
fn report_payload_updates_pool() {
    let mut c = controller();
    let d = c.handle_packet_in(&Packet::from(ReportPacket { src_ip: "10.0.0.3".into(), dst_ip: "10.0.0.1".into(), payload: b"V=2048;L=35.0;C=42.5;R=60.0".to_vec() }), 10.0);
    assert_eq!(d, Dispatch::Report("node2".into()));
    let load = c.pool().node_load(&"node2".into()).unwrap();
    assert_eq!((load.v_remaining, load.v_total, load.l_disk_io, load.c_cpu, load.r_mem), (2048, 4096, 35.0, 42.5, 60.0));
}

#[test]
fn undecodable_packets_are_dropped() {
    let mut c = controller();
    let bad = Packet { src_ip: "10.0.0.2".into(), dst_ip: "10.0.0.1".into(), payload: b"V=abc;L=1;C=1;R=1".to_vec() };
    assert!(matches!(c.handle_packet_in(&bad, 0.0), Dispatch::Dropped(_)));
    let stranger = report("10.9.9.9", 1, 1.0);
    assert!(matches!(c.handle_packet_in(&stranger, 0.0), Dispatch::Dropped(_)));
    let store = Packet { payload: b"STORE:video.mp4".to_vec(), ..store_packet("x", 1) };
    assert!(matches!(c.handle_packet_in(&store, 0.0), Dispatch::Dropped(_)));
    assert!(c.pool().node_load(&"node1".into()).is_none());
}

#[test]
fn store_codec() {
    assert_eq!(encode_store_request("video.mp4", 1048576000), b"STORE:video.mp4;1048576000".to_vec());
    let req = decode_store_request(b"STORE:a;b.mp4;12").unwrap();
    assert_eq!((req.file_name.as_str(), req.total_bytes), ("a;b.mp4", 12));
    assert_eq!(decode_store_request(b"STORE:;12"), None);
    assert_eq!(decode_store_request(b"STORE:x;-1"), None);
}

#[test]
fn store_request_builds_conserving_plan() {
    let mut c = primed(1000.0);
    let Dispatch::Store(Ok(decision)) = c.handle_packet_in(&store_packet("video.mp4", 1000 * MB), 1500.0) else {
        panic!("expected a decision");
    };
    assert_eq!(decision.plan.entries.len(), 3);
    assert_eq!(decision.plan.entries.iter().map(|e| e.bytes).sum::<u64>(), 1000 * MB);
    // node2 carries the heaviest disk load.
    assert!(decision.plan.bytes_for(&"node2".into()) < decision.plan.bytes_for(&"node1".into()));
    for e in &decision.plan.entries {
        assert!(c.flow_table().lookup("10.0.0.10", &e.ip).is_some());
    }
    let line: serde_json::Value = serde_json::from_str(&c.decision_log()[0]).unwrap();
    assert_eq!(line["kind"], "decision");
    assert_eq!(line["file"], "video.mp4");
    assert_eq!(line["plan"].as_array().unwrap().len(), 3);
    assert!(line.get("reason").is_none());
}

#[test]
fn fully_vetoed_pool_is_refused() {
    let mut c = controller();
    c.on_snapshot(snapshot(&c, 0.0));
    for ip in ["10.0.0.2", "10.0.0.3", "10.0.0.4"] {
        c.handle_packet_in(&report(ip, 100, 0.0), 0.0);
    }
    let d = c.handle_packet_in(&store_packet("f", 10), 1.0);
    assert_eq!(d, Dispatch::Store(Err(Refusal::AllVetoed)));
    let line: serde_json::Value = serde_json::from_str(&c.decision_log()[0]).unwrap();
    assert_eq!(line["kind"], "refusal");
    assert!(line["reason"].as_str().unwrap().contains("veto"));
}

#[test]
fn single_eligible_node_gets_whole_file() {
    let mut c = controller();
    c.on_snapshot(snapshot(&c, 0.0));
    c.handle_packet_in(&report("10.0.0.2", 100, 0.0), 0.0);
    c.handle_packet_in(&report("10.0.0.3", 3000, 0.0), 0.0);
    c.handle_packet_in(&report("10.0.0.4", 100, 0.0), 0.0);
    let d = c.handle_store_request(&"client".into(), "f", 12345, 1.0).unwrap();
    assert_eq!(d.plan.entries, vec![PlanEntry { node: "node2".into(), ip: "10.0.0.3".into(), bytes: 12345 }]);
}

#[test]
fn freshness_gate() {
    let mut c = controller();
    assert_eq!(c.handle_store_request(&"client".into(), "f", 1, 0.0), Err(Refusal::NoLinkState));
    c.on_snapshot(snapshot(&c, 0.0));
    assert_eq!(c.handle_store_request(&"client".into(), "f", 1, 0.0), Err(Refusal::NoLoadSamples));
    c.handle_packet_in(&report("10.0.0.2", 2048, 0.0), 0.0);
    c.handle_packet_in(&report("10.0.0.3", 2048, 0.0), 5000.0);
    c.on_snapshot(snapshot(&c, 6500.0));
    // node1's sample is 7000 ms old and is left out.
    let d = c.handle_store_request(&"client".into(), "f", 100, 7000.0).unwrap();
    assert_eq!(d.plan.entries.len(), 1);
    assert_eq!(d.plan.entries[0].node, HostId::from("node2"));
    assert!(matches!(c.handle_store_request(&"client".into(), "f", 1, 11_001.0), Err(Refusal::StaleLoads { .. })));
    assert!(matches!(c.handle_store_request(&"client".into(), "f", 1, 20_000.0), Err(Refusal::StaleLinks { .. })));
}

#[test]
fn installed_route_suppresses_packet_in() {
    let mut c = primed(0.0);
    let before = c.packet_in_count();
    let data = Packet { src_ip: "10.0.0.2".into(), dst_ip: "10.0.0.4".into(), payload: b"payload".to_vec() };
    let Dispatch::Route(entry) = c.handle_packet_in(&data, 1.0) else { panic!("expected a route") };
    assert_eq!(entry.path.len(), 2);
    for _ in 0..5 {
        assert_eq!(c.forward("10.0.0.2", "10.0.0.4", 2.0).unwrap(), entry.path);
    }
    assert_eq!(c.packet_in_count(), before + 1);
    c.forward("10.0.0.4", "10.0.0.2", 2.0).unwrap();
    assert_eq!(c.packet_in_count(), before + 2);
}

#[test]
fn cost_shift_invalidates_route() {
    let mut c = primed(0.0);
    c.forward("10.0.0.10", "10.0.0.2", 0.0).unwrap();
    assert_eq!(c.on_snapshot(snapshot(&c, 1000.0)), 0);
    assert_eq!(c.flow_table().len(), 1);
    let mut snap = snapshot(&c, 2000.0);
    let s = snap.states.get_mut(&LinkId(0)).unwrap();
    s.bw_remain = 10.0;
    s.delay = 9.0;
    assert_eq!(c.on_snapshot(snap), 1);
    assert!(c.flow_table().is_empty());
    let path = c.forward("10.0.0.10", "10.0.0.2", 2000.0).unwrap();
    assert_eq!(path, vec![LinkId(3), LinkId(2), LinkId(1)]);
}

fn stores(c: &Controller) -> BTreeMap<HostId, NodeStore> {
    c.topo.storage_hosts().map(|h| (h.id.clone(), NodeStore::new(h.id.clone(), 4096, 2048))).collect()
}

#[test]
fn store_then_pull_round_trip() {
    let mut c = primed(0.0);
    let mut stores = stores(&c);
    let d = c.handle_store_request(&"client".into(), "video.mp4", 300 * MB + 7, 10.0).unwrap();
    let index = write_index(&d.plan);
    let record = read_index(&index).unwrap();
    for e in &record.entries {
        let node = c.topo.host_by_ip(&e.node_ip).unwrap().id.clone();
        stores.get_mut(&node).unwrap().store_chunk(&e.chunk_name, e.chunk_bytes).unwrap();
    }
    let fetches = c.handle_pull_request(&"client".into(), &record, &stores, 20.0).unwrap();
    assert_eq!(fetches.len(), record.entries.len());
    for (f, e) in fetches.iter().zip(&record.entries) {
        assert_eq!((f.chunk_name.as_str(), f.bytes), (e.chunk_name.as_str(), e.chunk_bytes));
        assert_eq!(c.topo.walk(&c.topo.host(&f.node).unwrap().attached_switch, &f.path).unwrap().last().unwrap().0, "s1");
    }
    let fetched: Vec<FetchedChunk> = fetches.iter().map(|f| FetchedChunk { chunk_name: f.chunk_name.clone(), bytes: f.bytes }).collect();
    assert!(verify_merge(&record, &fetched).is_ok());
}

#[test]
fn pull_of_missing_chunk_names_it() {
    let mut c = primed(0.0);
    let stores = stores(&c);
    let record = read_index("file=x.bin\nsize=5\nchunk=x_1.bin,5,10.0.0.3\n").unwrap();
    assert_eq!(
        c.handle_pull_request(&"client".into(), &record, &stores, 1.0),
        Err(PullError::MissingChunk { chunk: "x_1.bin".into(), node_ip: "10.0.0.3".into() })
    );
}
