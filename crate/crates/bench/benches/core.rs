use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use valsize_core::evidence::{draw_theta, DistFamily, EvidencePrior, MarginalSpec, Parameterization, Target};
use valsize_core::precision::{preposterior_widths, PreposteriorMode};
use valsize_core::rng::{self, tag};
use valsize_core::voi::{Baseline, VoiModel};
use valsize_core::{LocationKind, RiskDistribution, RiskFamily, RiskMoments, ThetaDraw};

fn spec(target: Target, family: DistFamily, values: &[f64]) -> MarginalSpec {
    MarginalSpec { target, family, parameterization: Parameterization::Native, values: values.to_vec() }
}

fn prior_draws(s: usize) -> Vec<ThetaDraw> {
    let prior = EvidencePrior::new(&[
        spec(Target::Prevalence, DistFamily::Beta, &[119.64, 159.91]),
        spec(Target::CStatistic, DistFamily::LogitNormal, &[1.1565, 0.0412]),
        spec(Target::CalibrationLocation(LocationKind::MeanCalibration), DistFamily::Normal, &[-0.0093, 0.1245]),
        spec(Target::Slope, DistFamily::Normal, &[0.995, 0.0237]),
    ])
    .unwrap();
    draw_theta(&prior, s, RiskFamily::LogitNormal, 1).unwrap().draws
}

fn riskdist(c: &mut Criterion) {
    let target = RiskMoments::new(0.25, 0.75).unwrap();
    let mut g = c.benchmark_group("riskdist");
    for fam in RiskFamily::ALL {
        g.bench_with_input(BenchmarkId::new("identify", fam.name()), &fam, |b, &fam| {
            b.iter(|| RiskDistribution::identify(black_box(target), fam).unwrap())
        });
    }
    let d = RiskDistribution::logit_normal(-1.3302, 1.0395).unwrap();
    g.bench_function("cstat", |b| b.iter(|| black_box(&d).cstat().unwrap()));
    g.bench_function("sens_spec_at", |b| b.iter(|| black_box(&d).sens_spec_at(0.2).unwrap()));
    g.finish();
}

fn evidence(c: &mut Criterion) {
    let mut g = c.benchmark_group("evidence");
    g.sample_size(10);
    g.bench_function("draw_theta_1000", |b| b.iter(|| prior_draws(black_box(1000))));
    g.finish();
}

fn precision(c: &mut Criterion) {
    let thetas = prior_draws(500);
    let mut g = c.benchmark_group("preposterior_widths_500");
    g.sample_size(10);
    for mode in [PreposteriorMode::SampleBased, PreposteriorMode::TwoStep] {
        for n in [300u64, 1200] {
            g.bench_with_input(BenchmarkId::new(format!("{mode:?}"), n), &n, |b, &n| {
                b.iter(|| preposterior_widths(&thetas, n, mode, &Default::default(), 3).unwrap())
            });
        }
    }
    g.finish();
}

fn voi(c: &mut Criterion) {
    let thetas = prior_draws(2000);
    let model = VoiModel::new(&thetas, 0.2).unwrap();
    let mut g = c.benchmark_group("voi_2000");
    g.bench_function("model", |b| b.iter(|| VoiModel::new(black_box(&thetas), 0.2).unwrap()));
    for n in [306u64, 1181] {
        g.bench_with_input(BenchmarkId::new("run", n), &n, |b, &n| {
            b.iter(|| model.run(n, Baseline::BestCurrent, 5).unwrap())
        });
    }
    let theta = thetas[0];
    g.bench_function("sample_confusion", |b| {
        let mut r = rng::stream(9, tag::VOI, 0);
        b.iter(|| valsize_core::voi::sample_confusion(&theta, 0.2, 500, &mut r).unwrap())
    });
    g.finish();
}

criterion_group!(benches, riskdist, evidence, precision, voi);
criterion_main!(benches);
