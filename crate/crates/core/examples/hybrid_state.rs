//! Register layout, product states and marginals.
use num_complex::Complex64;
use spinphonon::{HybridState, Result};

fn main() -> Result<()> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let spin = [Complex64::new(s, 0.0), Complex64::new(0.0, s)];
    let mode: Vec<Complex64> = (0..4).map(|n| Complex64::new(if n == 1 { 1.0 } else { 0.0 }, 0.0)).collect();
    let st = HybridState::product(&spin, &[mode])?;
    println!("dim {} norm {:.3}", st.dim(), st.norm());
    println!("spin marginal {:?}", st.spin_marginal());
    println!("mode marginal {:?}", st.mode_marginal(0)?);
    println!("mean occupation {}", st.mean_occupation(0)?);

    let mut buf = Vec::new();
    st.write_dump(&mut buf)?;
    let back = HybridState::read_dump(buf.as_slice())?;
    println!("dump roundtrip fidelity {}", back.fidelity(&st));
    Ok(())
}
