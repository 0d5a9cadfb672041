//! Native gates: CNOT from a Mølmer-Sørensen gate and a spin-dependent kick
//! producing a cat state.
use spinphonon::gates::{circuit_matrix, cnot_decomposition, gate_matrix};
use spinphonon::linalg::{max_abs, unitarity_defect};
use spinphonon::{GateOp, HybridState, Result};

fn main() -> Result<()> {
    let dec = cnot_decomposition(0, 1, 2, 0)?;
    print!("{dec}");
    let u = circuit_matrix(&dec, &[])?;
    let cnot = gate_matrix(&GateOp::Cnot { control: 0, target: 1 }, 2, &[])?;
    let phase = u[(0, 0)] / cnot[(0, 0)];
    println!("max |U - e^ia CNOT| = {:.1e}", max_abs(&(u - cnot * phase)));

    let snp = GateOp::Snp { qubit: 0, mode: 0, theta: 2.0, phi: 0.0 };
    println!("SNP unitarity defect {:.1e}", unitarity_defect(&gate_matrix(&snp, 1, &[12])?));
    let mut st = HybridState::vacuum(1, &[12])?;
    snp.apply(&mut st)?;
    let p: Vec<String> = st.mode_marginal(0)?.iter().take(6).map(|x| format!("{x:.3}")).collect();
    println!("cat state Fock populations {}", p.join(" "));
    Ok(())
}
