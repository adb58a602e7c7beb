//! Random valid instances of every file format.

use avexpr_core::alignment::AudioTrack;
use avexpr_core::datamodel::{Expression, FrameRecord, VideoSequence};
use avexpr_core::ndmath::{Matrix, NamedTensor, Rng, TensorStore};

fn f32s(rng: &mut Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| (rng.normal() * 10.0) as f32).collect()
}

pub fn sequence(rng: &mut Rng) -> VideoSequence {
    let dv = 1 + rng.below(6);
    let da = if rng.bernoulli(0.3) { 0 } else { 1 + rng.below(5) };
    let id: String = (0..rng.below(12)).map(|_| char::from(b'a' + rng.below(26) as u8)).collect();
    let fps = 1.0 + 59.0 * rng.uniform();
    let mut seq = VideoSequence::new(id, fps, dv, da);
    let mut index = rng.below(5) as u64;
    let mut t = rng.uniform();
    for _ in 0..rng.below(9) {
        let audio = (da > 0 && rng.bernoulli(0.7)).then(|| f32s(rng, da));
        let label = if rng.bernoulli(0.2) { None } else { Expression::from_index(rng.below(8)) };
        seq.records.push(FrameRecord {
            frame_index: index,
            timestamp: t,
            visual: [f32s(rng, dv), f32s(rng, dv), f32s(rng, dv)],
            audio,
            label,
        });
        index += 1 + rng.below(3) as u64;
        t += rng.uniform() / fps;
    }
    seq
}

pub fn track(rng: &mut Rng) -> AudioTrack {
    let hop = 0.005 + 0.05 * rng.uniform();
    let mut track = AudioTrack::new(1 + rng.below(6), hop);
    let start = rng.uniform();
    for j in 0..rng.below(20) {
        let f = f32s(rng, track.dim);
        track.push(start + j as f64 * hop, &f).unwrap();
    }
    track
}

pub fn logits(rng: &mut Rng) -> Matrix {
    let (t, c) = (rng.below(30), 1 + rng.below(9));
    // f32-representable values so the decoded matrix re-encodes identically
    Matrix::new(t, c, (0..t * c).map(|_| f64::from((rng.normal() * 5.0) as f32)).collect()).unwrap()
}

pub fn store(rng: &mut Rng) -> TensorStore {
    let tensors = (0..rng.below(6))
        .map(|i| {
            let dims: Vec<usize> = (0..rng.below(4)).map(|_| 1 + rng.below(4)).collect();
            let n = dims.iter().product();
            NamedTensor { name: format!("t{i}.{}", "x".repeat(rng.below(5))), dims, data: f32s(rng, n) }
        })
        .collect();
    TensorStore { tensors }
}
