//! Flattening a layered gradient into the smallest square grid and back.

use pgla::shape::{adjust, grid_side, restore, GradientRole, GradientVector, GridRule, LayerLayout};

pub fn run_example() -> pgla::Result<()> {
    let layout = LayerLayout::new([("w", vec![3, 4]), ("b", vec![3])])?;
    let values: Vec<f32> = (0..15).map(|i| i as f32 * 0.1 - 0.7).collect();
    let g = GradientVector::from_vec(values, layout, GradientRole::Clean)?;
    let grid = adjust(&g);
    println!("L = {}, grid {:?}, padding {}", g.len(), grid.grid().shape(), grid.padding());
    assert_eq!(grid.side(), 4);
    let back = restore(&grid, g.layout())?;
    assert_eq!(back.data(), g.data());
    println!("restored {} values bit-exactly, role {:?}", back.len(), back.role());

    let n = grid.normalized();
    println!("standardized with scale {:.4} offset {:.4}", n.scale(), n.offset());
    for len in [1, 16, 25_450] {
        println!(
            "L = {len}: strict side {}, inclusive side {}",
            grid_side(len, GridRule::Strict),
            grid_side(len, GridRule::Inclusive)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
