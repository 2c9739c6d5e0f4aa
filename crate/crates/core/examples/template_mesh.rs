//! Builds the procedural humanoid, its color code and geodesic table, and
//! prints a short summary.
//!
//! ```text
//! cargo run --example template_mesh
//! cargo run --example template_mesh -- --write-assets crates/core/assets
//! ```
//!
//! `--write-assets` regenerates the shipped OBJ and rig files.

use std::path::PathBuf;

use bodymap::mesh::{io, Surface, TemplateMesh};

fn main() -> bodymap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mesh = TemplateMesh::humanoid();
    if let Some(i) = args.iter().position(|a| a == "--write-assets") {
        let dir = PathBuf::from(args.get(i + 1).map(String::as_str).unwrap_or("assets"));
        std::fs::create_dir_all(&dir)?;
        io::save_mesh(&mesh, &dir.join("template.obj"), &dir.join("template.rig.json"))?;
        println!("wrote template assets to {}", dir.display());
    }
    let surface = Surface::new(mesh)?;
    let m = &surface.mesh;
    println!("vertices        {}", m.vertex_count());
    println!("faces           {}", m.faces().len());
    println!("bones           {}", m.bones().len());
    println!("mean edge       {:.4}", surface.mean_edge_length());
    println!("sigma_geo       {:.4}", surface.sigma_geo());
    println!("color min gap   {}", surface.coloring.min_gap());
    println!("max edge delta  {}", surface.coloring.max_edge_delta(m));
    println!("content hash    {}", m.content_hash());
    let v = m.vertex_count() / 2;
    let c = surface.color(v);
    println!("vertex {v} -> color {c:?} -> vertex {}", surface.coloring.color_to_vertex(c));
    Ok(())
}
