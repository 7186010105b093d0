use caise_core::edit;
use caise_core::{ColorName, Exec, Intensity, RasterImage};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn gradient(w: usize, h: usize) -> RasterImage {
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            px.extend([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
        }
    }
    RasterImage::new(w, h, px).unwrap()
}

fn bench_ops(c: &mut Criterion) {
    let img = gradient(1024, 768);
    let mut group = c.benchmark_group("image_ops");
    group.sample_size(20);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let name = format!("{exec:?}");
        group.bench_with_input(BenchmarkId::new("brightness", &name), &exec, |b, &e| {
            b.iter(|| edit::adjust_brightness_with(&img, 40, e))
        });
        group.bench_with_input(BenchmarkId::new("color", &name), &exec, |b, &e| {
            b.iter(|| edit::adjust_color_with(&img, ColorName::SkyBlue, Intensity::from_millis(300).unwrap(), e))
        });
        group.bench_with_input(BenchmarkId::new("rotate_33", &name), &exec, |b, &e| b.iter(|| edit::rotate_with(&img, 33, e)));
    }
    group.finish();
}

criterion_group!(benches, bench_ops);
criterion_main!(benches);
