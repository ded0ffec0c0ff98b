use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ecgnet_bench::{adc_stream, random_tensor, random_vec, BATCH};
use ecgnet_core::ops::conv::{conv1d_backward, conv1d_forward, ConvMode, ConvParams};
use ecgnet_core::wavelet::{denoise, dwt, idwt, DEFAULT_LEVELS};
use ecgnet_core::wfdb::{decode_212, encode_212};
use ecgnet_core::Shape;

fn conv(c: &mut Criterion) {
    // Layer shapes from the second V1 block: 28 -> 56 channels over 120 samples.
    let cases = [
        (ConvMode::Standard, 5, 28, 56, 2),
        (ConvMode::Depthwise, 5, 56, 56, 2),
        (ConvMode::Pointwise, 1, 56, 56, 0),
    ];
    let mut group = c.benchmark_group("conv1d");
    for (mode, k, cin, cout, pad) in cases {
        let mut params = ConvParams::<f32>::new(mode, k, cin, cout, 1, pad, false).unwrap();
        for (i, w) in random_vec(params.weight.len(), 1).into_iter().enumerate() {
            params.weight[i] = w as f32;
        }
        let x = random_tensor(Shape::new(BATCH, cin, 120), 2);
        let y = conv1d_forward(&x, &params).unwrap();
        let dy = random_tensor(y.shape(), 3);
        group.bench_function(BenchmarkId::new("forward", mode), |b| {
            b.iter(|| conv1d_forward(black_box(&x), &params).unwrap())
        });
        group.bench_function(BenchmarkId::new("backward", mode), |b| {
            b.iter(|| conv1d_backward(black_box(&dy), Some(&x), &params).unwrap())
        });
    }
    group.finish();
}

fn wavelet(c: &mut Criterion) {
    let beat = random_vec(360, 4);
    let mut group = c.benchmark_group("wavelet");
    group.bench_function("dwt+idwt 360", |b| {
        b.iter(|| idwt(&dwt(black_box(&beat), DEFAULT_LEVELS).unwrap()).unwrap())
    });
    group.bench_function("denoise 360", |b| b.iter(|| denoise(black_box(&beat))));
    group.finish();
}

fn fmt212(c: &mut Criterion) {
    // Thirty minutes of two-channel 360 Hz signal, the size of one MIT-BIH record.
    let frames = 650_000;
    let stream = adc_stream(frames, 5);
    let bytes = encode_212(&stream).unwrap();
    let mut group = c.benchmark_group("fmt212");
    group.throughput(Throughput::Bytes(bytes.len() as u64));
    group.sample_size(20);
    group.bench_function("decode record", |b| b.iter(|| decode_212(black_box(&bytes), frames, 2).unwrap()));
    group.bench_function("encode record", |b| b.iter(|| encode_212(black_box(&stream)).unwrap()));
    group.finish();
}

criterion_group!(benches, conv, wavelet, fmt212);
criterion_main!(benches);
