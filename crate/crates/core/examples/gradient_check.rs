//! Compare the analytic behavioral-cloning gradient and the gradient of the
//! matching distance with central finite differences.
//!
//! cargo run --release --example gradient_check

use offline_distill::selfcheck::{self, SelfcheckOptions};

fn main() -> offline_distill::Result<()> {
    println!("bc_grad        max rel err {:.2e}", selfcheck::bc_grad_error(20, false)?);
    println!("matching grad  max rel err {:.2e}", selfcheck::matching_grad_error(10, false)?);
    println!("with one analytic coordinate corrupted:");
    println!("bc_grad        max rel err {:.2e}", selfcheck::bc_grad_error(20, true)?);
    println!();
    for r in selfcheck::run(&SelfcheckOptions::default()) {
        println!("{r}");
    }
    Ok(())
}
