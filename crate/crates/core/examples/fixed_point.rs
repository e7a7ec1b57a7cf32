//! Rounding, saturation and accumulator policies of the emulated number formats.

use ltbf::arith::{qadd, qdot, qmul, AccumulatorPolicy, ArithmeticProfile, QScalar};

fn main() -> ltbf::error::Result<()> {
    let q15 = ArithmeticProfile::Q15_16;
    let q7 = ArithmeticProfile::Q7_16;

    println!("quantize 0.1 to Q15.16     -> {:.15}", q15.quantize(0.1)?);
    println!("quantize 200 to Q7.16      -> {:.16}", q7.quantize(200.0)?);
    println!("quantize 0.1 to FP32       -> {:.17}", ArithmeticProfile::Fp32.quantize(0.1)?);

    let tenth = QScalar::real(0.1, q15)?;
    println!("0.1 * 0.1 in Q15.16        -> {:.16}", qmul(tenth, tenth, q15).value().re);
    let hundred = QScalar::real(100.0, q7)?;
    println!("100 + 100 in Q7.16         -> {:.16}", qadd(hundred, hundred, q7).value().re);

    let v = vec![tenth; 3];
    for policy in [AccumulatorPolicy::Wide, AccumulatorPolicy::Narrow] {
        println!("dot of three 0.1s, {policy:?}: {:.16}", qdot(&v, &v, q15, policy)?.value().re);
    }
    Ok(())
}
