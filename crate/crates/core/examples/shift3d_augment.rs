//! Shift3D on a small labelled tensor: a random draw, its replay, and the
//! reverse shift that undoes it.

use lungmtl::seed::stream;
use lungmtl::shift3d::{apply_shift, shift3d, Shift3DConfig};
use ndarray::Array3;

fn main() -> lungmtl::Result<()> {
    let t = Array3::from_shape_fn((4, 5, 6), |(z, y, x)| (100 * z + 10 * y + x) as i32);
    let mut rng = stream(7, "shift3d-example");
    let wrap = Shift3DConfig {
        max_shift_fraction: 0.5,
        ..Shift3DConfig::default()
    };
    for _ in 0..4 {
        let (out, ev) = shift3d(&t, &wrap, 0, &mut rng)?;
        let back = apply_shift(&out, &ev.reverse(), &wrap, 0)?;
        println!(
            "axis {} direction {:+} shift {}: first row {:?}, undone {}",
            ev.axis,
            ev.direction,
            ev.shift,
            out.slice(ndarray::s![0, 0, ..]).to_vec(),
            back == t
        );
    }
    let padded = Shift3DConfig {
        padding: true,
        padding_value: -1.0,
        ..wrap
    };
    let (out, ev) = shift3d(&t.mapv(|v| v as f32), &padded, -1.0, &mut rng)?;
    let filled = out.iter().filter(|&&v| v == -1.0).count();
    println!("padded shift {ev:?}: {filled} voxels filled with -1");
    Ok(())
}
