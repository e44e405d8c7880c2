use caprange::green::FourierEngine;
use caprange::stepdist::StepDistribution;
use caprange::lattice;
fn main() {
    let dist = StepDistribution::by_name("srw5").unwrap();
    let eng = FourierEngine::new(&dist).unwrap();
    let sites = [[0i64,0,0,0,0],[3,2,1,0,0],[6,6,6,6,6],[13,2,1,1,0],[14,0,0,0,0],[9,9,5,3,1],[7,7,7,2,1]];
    let refs: Vec<f64> = sites.iter().map(|c| eng.eval_with(&lattice::from_coords(c), 11, 6, 14)).collect();
    for (b, ol, il) in [(6usize, 4u32, 8u32), (7, 4, 9), (8, 4, 10)] {
        let t = std::time::Instant::now();
        let mut worst = 0.0f64;
        for (c, r) in sites.iter().zip(&refs) {
            let v = eng.eval_with(&lattice::from_coords(c), b, ol, il);
            worst = worst.max((v - r).abs());
        }
        println!("plan ({b},{ol},{il}): worst |err| = {worst:.2e}, avg time {:?}", t.elapsed() / sites.len() as u32);
    }
}
