//! Smoothed targets, tempered softmax, and the distillation loss on one logit
//! vector, including the identity KL = CE − H(teacher).

use lskd::labels::{
    cross_entropy, distill_loss, entropy, kl_divergence, smooth_labels, softmax, DistillConfig,
    LabelVector, LogitVector,
};

fn show(name: &str, v: &[f64]) {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    println!("{name:>14}: [{}]", cells.join(", "));
}

fn main() -> lskd::Result<()> {
    let k = 5;
    show("one-hot", LabelVector::one_hot(2, k)?.values());
    show("smoothed 0.1", smooth_labels(2, 0.1, k)?.values());

    let student = LogitVector::new(vec![1.0, 0.5, 3.0, -1.0, 0.0])?;
    let teacher = LogitVector::new(vec![0.5, 0.2, 4.0, -2.0, 0.3])?;
    for t in [1.0, 2.0, 4.0] {
        show(&format!("softmax T={t}"), softmax(&student, t)?.values());
    }

    let ps = softmax(&student, 1.0)?;
    let pt = softmax(&teacher, 1.0)?;
    let kl = kl_divergence(&pt, &ps)?;
    let ce = cross_entropy(&ps, &pt)?;
    let h = entropy(pt.values());
    println!("KL = {kl:.6}, CE - H = {:.6}", ce - h);

    let hard = LabelVector::one_hot(2, k)?;
    for lambda in [0.0, 0.5, 1.0] {
        let cfg = DistillConfig { lambda, temperature: 2.0, rescale_grad_by_t2: false };
        println!("distill loss lambda={lambda} T=2: {:.6}", distill_loss(&student, &teacher, &hard, &cfg)?);
    }
    Ok(())
}
