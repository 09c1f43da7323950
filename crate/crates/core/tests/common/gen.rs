//! Random structurally valid workflows built from std kinds.
#![allow(dead_code)]

use loopflow::graph::{Direction, ParamTarget};
use loopflow::{NodeRegistry, ParamValue, Workflow};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub struct Generator<'r> {
    registry: &'r NodeRegistry,
    rng: StdRng,
    max_depth: usize,
}

impl<'r> Generator<'r> {
    pub fn new(registry: &'r NodeRegistry, seed: u64) -> Self {
        Generator {
            registry,
            rng: StdRng::seed_from_u64(seed),
            max_depth: 2,
        }
    }

    /// Between 1 and 10 leaves per level, up to two levels of nesting.
    pub fn workflow(&mut self, name: &str) -> Workflow {
        self.level(name, 0)
    }

    fn level(&mut self, name: &str, depth: usize) -> Workflow {
        let mut wf = Workflow::new(name);
        let leaves = self.rng.random_range(1..=10);
        let mut children = Vec::new();
        let mut delays = Vec::new();
        for i in 0..leaves {
            let child = format!("n{i}");
            let spec = self.leaf(&child);
            if spec.kind == "Delay" {
                delays.push(ParamTarget::new(child.clone(), "delay_ms"));
            }
            wf.add_node(spec).unwrap();
            children.push(child);
        }
        if depth < self.max_depth {
            let subs = self.rng.random_range(0..=2);
            for i in 0..subs {
                let child = format!("sub{i}");
                let sub = self.level(&child, depth + 1);
                for exposed in sub.exposed_parameters().keys() {
                    delays.push(ParamTarget::new(child.clone(), exposed.clone()));
                }
                wf.add_subgraph(sub).unwrap();
                children.push(child);
            }
        }
        self.wire(&mut wf, &children);
        self.expose_parameters(&mut wf, &delays);
        if depth > 0 {
            self.expose_ports(&mut wf, &children);
        }
        wf
    }

    fn leaf(&mut self, name: &str) -> loopflow::NodeSpec {
        let int = ParamValue::Str("int".into());
        let r = self.registry;
        match self.rng.random_range(0..5) {
            0 => r.spec("LoadData", name, [
                ("item_type", int),
                ("value", ParamValue::Int(self.rng.random_range(-100..100))),
            ]),
            1 => {
                let mut spec = r.spec("Delay", name, [("item_type", int)]).unwrap();
                if self.rng.random_bool(0.5) {
                    spec.set("delay_ms", self.rng.random_range(0..50) as f64).unwrap();
                }
                return spec.retries(self.rng.random_range(0..3));
            }
            2 => r.spec("Copy", name, [
                ("item_type", int),
                ("outputs", ParamValue::Int(self.rng.random_range(1..4))),
            ]),
            3 => r.spec("Merge", name, [
                ("item_type", int),
                ("inputs", ParamValue::Int(self.rng.random_range(1..4))),
            ]),
            _ => r.spec::<&str, ParamValue>("LogResult", name, []),
        }
        .unwrap()
    }

    fn free_ports(wf: &Workflow, children: &[String], direction: Direction) -> Vec<String> {
        let mut out = Vec::new();
        for child in children {
            for (port, p) in wf.interface(child).unwrap() {
                if p.direction == direction && !p.is_connected() {
                    out.push(format!("{child}.{port}"));
                }
            }
        }
        out
    }

    fn wire(&mut self, wf: &mut Workflow, children: &[String]) {
        let attempts = self.rng.random_range(0..=children.len() * 2);
        for _ in 0..attempts {
            let outs = Self::free_ports(wf, children, Direction::Output);
            let ins = Self::free_ports(wf, children, Direction::Input);
            let (Some(src), Some(dst)) = (outs.choose(&mut self.rng), ins.choose(&mut self.rng))
            else {
                return;
            };
            let capacity = self.rng.random_range(1..=32);
            // std kinds here all carry int, so any pair is type compatible
            wf.connect(&src.clone(), &dst.clone(), capacity).unwrap();
        }
    }

    fn expose_parameters(&mut self, wf: &mut Workflow, targets: &[ParamTarget]) {
        if targets.is_empty() {
            return;
        }
        let groups = self.rng.random_range(0..=targets.len().min(3));
        for g in 0..groups {
            let count = self.rng.random_range(1..=targets.len());
            let picked: Vec<ParamTarget> = targets
                .choose_multiple(&mut self.rng, count)
                .cloned()
                .collect();
            // a target already covered by another group is fine structurally
            let _ = wf.map_parameters(&format!("delay{g}"), &picked);
        }
    }

    fn expose_ports(&mut self, wf: &mut Workflow, children: &[String]) {
        let mut free = Self::free_ports(wf, children, Direction::Input);
        free.extend(Self::free_ports(wf, children, Direction::Output));
        for (i, port) in free.iter().enumerate() {
            if self.rng.random_bool(0.5) {
                wf.expose_port(&format!("p{i}"), port).unwrap();
            }
        }
    }
}
