//! Hand-built evaluation instances, each with at most ten boxes per side.

use std::f64::consts::PI;

use super::eval_oracle::OBox;
use union_core::evaluation::{ClassMode, EvalBox};

pub fn b(frame: usize, class: &'static str, x: f64, y: f64) -> OBox {
    OBox {
        frame,
        class,
        x,
        y,
        size: [4.0, 2.0, 1.5],
        yaw: 0.0,
        vel: [0.0, 0.0],
        score: 1.0,
    }
}

pub trait With {
    fn s(self, score: f64) -> Self;
    fn size(self, l: f64, w: f64, h: f64) -> Self;
    fn yaw(self, yaw: f64) -> Self;
    fn vel(self, vx: f64, vy: f64) -> Self;
}

impl With for OBox {
    fn s(mut self, score: f64) -> Self {
        self.score = score;
        self
    }
    fn size(mut self, l: f64, w: f64, h: f64) -> Self {
        self.size = [l, w, h];
        self
    }
    fn yaw(mut self, yaw: f64) -> Self {
        self.yaw = yaw;
        self
    }
    fn vel(mut self, vx: f64, vy: f64) -> Self {
        self.vel = [vx, vy];
        self
    }
}

pub struct Instance {
    pub name: &'static str,
    pub gts: Vec<OBox>,
    pub preds: Vec<OBox>,
    pub mode: ClassMode,
    pub period_pi: bool,
}

pub fn inst(name: &'static str, gts: Vec<OBox>, preds: Vec<OBox>) -> Instance {
    Instance {
        name,
        gts,
        preds,
        mode: ClassMode::Grouped,
        period_pi: false,
    }
}

pub fn to_eval(o: &OBox) -> EvalBox {
    EvalBox {
        frame: ("scene".into(), o.frame),
        center: [o.x, o.y, 1.0],
        size: o.size,
        yaw: o.yaw,
        velocity: o.vel,
        class_name: o.class.to_string(),
        score: o.score,
    }
}

pub const V: &str = "vehicle";
pub const P: &str = "pedestrian";
pub const C: &str = "cyclist";

pub fn instances() -> Vec<Instance> {
    let row = |n: usize, y: f64| {
        (0..n)
            .map(move |i| b(0, V, i as f64 * 10.0, y))
            .collect::<Vec<_>>()
    };
    let mut v = vec![
        inst(
            "single exact",
            vec![b(0, V, 1.0, 1.0)],
            vec![b(0, V, 1.0, 1.0).s(0.7)],
        ),
        inst(
            "offset 0.7",
            vec![b(0, V, 0.0, 0.0)],
            vec![b(0, V, 0.7, 0.0).s(0.9)],
        ),
        inst(
            "two preds one gt",
            vec![b(0, V, 0.0, 0.0)],
            vec![b(0, V, 1.5, 0.0).s(0.9), b(0, V, 0.0, 0.1).s(0.8)],
        ),
        inst("half true positives", row(10, 0.0), {
            let mut p: Vec<OBox> = row(5, 0.0).into_iter().map(|x| x.s(0.9)).collect();
            p.extend(row(5, 50.0).into_iter().map(|x| x.s(0.5)));
            p
        }),
        inst(
            "false positives first",
            vec![b(0, V, 0.0, 0.0), b(0, V, 20.0, 0.0), b(0, V, 40.0, 0.0)],
            vec![
                b(0, V, 0.0, 30.0).s(0.95),
                b(0, V, 10.0, 30.0).s(0.9),
                b(0, V, 0.2, 0.0).s(0.6),
                b(0, V, 20.0, 0.9).s(0.5),
                b(0, V, 41.0, 1.0).s(0.4),
            ],
        ),
        inst(
            "frames separate",
            vec![b(0, V, 0.0, 0.0), b(1, V, 5.0, 0.0)],
            vec![
                b(1, V, 0.0, 0.0).s(0.9),
                b(0, V, 5.0, 0.0).s(0.8),
                b(1, V, 5.3, 0.0).s(0.3),
            ],
        ),
        inst(
            "equal scores keep input order",
            vec![b(0, V, 0.0, 0.0)],
            vec![b(0, V, 1.2, 0.0).s(0.5), b(0, V, 0.1, 0.0).s(0.5)],
        ),
        inst(
            "no predictions",
            vec![b(0, V, 0.0, 0.0), b(1, P, 3.0, 3.0)],
            vec![],
        ),
        inst(
            "wrong class only",
            vec![b(0, V, 0.0, 0.0)],
            vec![b(0, P, 0.0, 0.0).s(0.9).size(0.7, 0.7, 1.8)],
        ),
        inst(
            "two classes",
            vec![
                b(0, V, 0.0, 0.0),
                b(0, V, 10.0, 0.0),
                b(0, P, 5.0, 5.0).size(0.7, 0.6, 1.8),
                b(1, P, 6.0, 5.0).size(0.7, 0.6, 1.8),
            ],
            vec![
                b(0, V, 0.3, 0.2).s(0.8).size(4.4, 1.9, 1.6),
                b(0, P, 5.2, 5.1).s(0.7).size(0.8, 0.8, 1.7),
                b(1, P, 9.0, 9.0).s(0.9).size(0.8, 0.8, 1.7),
                b(0, V, 30.0, 0.0).s(0.85),
            ],
        ),
        inst(
            "size yaw velocity errors",
            vec![
                b(0, V, 0.0, 0.0).yaw(3.0).vel(2.0, 0.0),
                b(0, V, 10.0, 0.0).yaw(0.5).vel(0.0, 0.0),
                b(0, V, 20.0, 0.0).yaw(-1.0).vel(1.0, 1.0),
            ],
            vec![
                b(0, V, 0.4, 0.3)
                    .yaw(-3.0)
                    .vel(1.5, 0.2)
                    .size(3.5, 1.8, 1.4)
                    .s(0.9),
                b(0, V, 10.0, 1.2)
                    .yaw(0.5 + PI)
                    .vel(0.3, 0.0)
                    .size(5.0, 2.5, 2.0)
                    .s(0.8),
                b(0, V, 21.5, 0.0)
                    .yaw(2.0)
                    .vel(-1.0, 1.0)
                    .size(2.0, 1.0, 1.0)
                    .s(0.7),
            ],
        ),
        inst(
            "distance on threshold",
            vec![b(0, V, 0.0, 0.0), b(0, V, 10.0, 0.0)],
            vec![b(0, V, 1.0, 0.0).s(0.6), b(0, V, 12.0, 0.0).s(0.4)],
        ),
        inst(
            "interleaved crowd",
            vec![b(0, V, 0.0, 0.0), b(0, V, 3.0, 0.0), b(0, V, 6.0, 0.0)],
            vec![
                b(0, V, 0.2, 0.1).s(0.31),
                b(0, V, 1.4, 0.0).s(0.92),
                b(0, V, 3.3, 0.3).s(0.55),
                b(0, V, 4.6, 0.0).s(0.74),
                b(0, V, 6.1, -0.2).s(0.12),
                b(0, V, 7.9, 0.0).s(0.88),
                b(0, V, -1.0, 0.0).s(0.66),
                b(0, V, 2.9, 0.9).s(0.47),
                b(0, V, 5.5, 0.4).s(0.99),
                b(0, V, 0.0, 3.5).s(0.05),
            ],
        ),
        inst(
            "low recall",
            row(10, 0.0),
            vec![
                b(0, V, 0.0, 0.1).s(0.9),
                b(0, V, 10.0, 0.2).s(0.8),
                b(0, V, 20.0, 0.3).s(0.7),
            ],
        ),
        inst(
            "recall at clip",
            row(10, 0.0),
            vec![b(0, V, 0.0, 0.0).s(0.9), b(0, V, 0.0, 40.0).s(0.2)],
        ),
        inst(
            "nearest wins",
            vec![b(0, V, 0.0, 0.0), b(0, V, 2.0, 0.0)],
            vec![b(0, V, 1.2, 0.0).s(0.9), b(0, V, 0.6, 0.0).s(0.8)],
        ),
        Instance {
            period_pi: true,
            ..inst(
                "orientation modulo pi",
                vec![b(0, V, 0.0, 0.0).yaw(0.2), b(0, V, 10.0, 0.0).yaw(-1.4)],
                vec![
                    b(0, V, 0.1, 0.0).yaw(0.2 + PI - 0.05).s(0.9),
                    b(0, V, 10.0, 0.3).yaw(1.6).s(0.8),
                ],
            )
        },
        inst(
            "tied scores across frames",
            vec![
                b(0, V, 0.0, 0.0),
                b(1, V, 0.0, 0.0),
                b(2, V, 0.0, 0.0),
                b(2, V, 4.0, 0.0),
            ],
            vec![
                b(2, V, 3.5, 0.0).s(0.5),
                b(0, V, 0.8, 0.0).s(0.5),
                b(1, V, 3.0, 0.0).s(0.5),
                b(2, V, 0.4, 0.0).s(0.5),
                b(1, V, 0.0, 0.45).s(0.5),
            ],
        ),
        inst(
            "three classes",
            vec![
                b(0, V, 0.0, 0.0),
                b(0, P, 5.0, 5.0).size(0.7, 0.7, 1.8),
                b(0, C, 9.0, 2.0).size(1.8, 0.6, 1.5).vel(3.0, 0.0),
                b(1, C, 11.0, 2.0).size(1.8, 0.6, 1.5).vel(3.0, 0.0),
            ],
            vec![
                b(0, C, 9.3, 2.1).size(1.7, 0.7, 1.4).vel(2.5, 0.5).s(0.6),
                b(1, C, 14.0, 2.0).size(1.7, 0.7, 1.4).s(0.7),
                b(0, V, 0.5, 0.5).s(0.4),
                b(0, P, 5.0, 5.9).size(0.6, 0.6, 1.7).s(0.95),
                b(0, P, 5.1, 5.0).size(0.6, 0.6, 1.7).s(0.3),
            ],
        ),
        inst(
            "irregular coordinates",
            vec![
                b(0, V, 12.37, -4.21).yaw(0.73).vel(4.1, -0.3),
                b(0, V, -7.92, 15.55).yaw(-2.9).size(4.8, 2.1, 1.9),
                b(1, V, 12.91, -4.18).yaw(0.71).vel(4.0, -0.2),
                b(1, V, 33.3, 1.01),
            ],
            vec![
                b(0, V, 12.1, -3.77).yaw(0.69).vel(3.7, 0.1).s(0.83),
                b(0, V, -8.44, 16.02).yaw(0.2).size(4.4, 1.9, 1.7).s(0.64),
                b(1, V, 13.72, -4.6).yaw(0.8).vel(4.4, -0.5).s(0.91),
                b(1, V, 30.0, 1.0).s(0.12),
                b(1, V, 33.9, 0.2).s(0.11),
            ],
        ),
    ];
    v.push(Instance {
        mode: ClassMode::Agnostic,
        ..inst(
            "agnostic merge",
            vec![b(0, V, 0.0, 0.0), b(0, P, 3.0, 0.0).size(0.7, 0.7, 1.8)],
            vec![
                b(0, P, 0.3, 0.0).s(0.9),
                b(0, V, 3.1, 0.4).s(0.8).size(0.7, 0.7, 1.8),
            ],
        )
    });
    v
}
