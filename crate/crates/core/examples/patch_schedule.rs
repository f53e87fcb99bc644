//! Patch enumeration, coloring, space-filling orderings and batching.
//!
//! Pass `hierarchical` as the first argument to switch ordering.

use patchmg::mesh::{MeshHierarchy, PatchOrdering, Schedule};

fn main() -> patchmg::Result<()> {
    let ordering: PatchOrdering = std::env::args().nth(1).as_deref().unwrap_or("z_curve").parse()?;
    let mesh = MeshHierarchy::new(2, 2)?;
    println!("level 1: {} patches", mesh.n_patches(1));
    print!("{}", Schedule::new(&mesh, 1, ordering, 2)?.to_diagnostic_text());

    let s = Schedule::new(&mesh, 2, ordering, 4)?;
    println!("\nlevel 2, n_B = 4: {} batches, largest color {}", s.n_batches(), s.max_color_size());
    for (b, k, list) in s.entries().take(6) {
        println!("  batch {b} color {k}: {} patches", list.len());
    }
    Ok(())
}
