use pathgeo::lewy::*;
use pathgeo::paracr::catalog_flat;

fn main() {
    let entry = catalog_flat();
    println!("eliminated = {} (y_chart {:?})", entry.eliminated, entry.phi.y_chart);
    let recipe = LewyRecipe::new(&entry.phi, entry.eliminated);
    let jet = LewyJet { t: 0.0, z: 0.0, v: 0.0, zp: 1.0, vp: 1.0 };
    println!("generic: {:?}", recipe.rhs(&jet, &SeedRule::Generic));
}
