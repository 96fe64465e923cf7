//! Analytic FLOPs for the student and both teacher configurations.

use vser::{count_flops, count_flops_with, FlopsConvention, ModelSpec};

fn main() {
    let specs = [
        ("student (depth 3, heads 5)", ModelSpec::student(7)),
        ("teacher (depth 6, heads 5)", ModelSpec::teacher(6, 5, 7)),
        ("teacher (depth 12, heads 12)", ModelSpec::teacher(12, 12, 7)),
        ("square variant (16x16)", ModelSpec::square_variant(6, 5, 7)),
    ];
    for (name, spec) in specs {
        let report = count_flops(&spec);
        let two = count_flops_with(&spec, FlopsConvention::MacAsTwo);
        println!("{name}: {:.3}G (multiply and add separate: {:.3}G)", report.giga(), two.giga());
        println!("{report}\n");
    }
}
