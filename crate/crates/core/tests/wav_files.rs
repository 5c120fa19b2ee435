use hound::{SampleFormat, WavSpec, WavWriter};
use zffvad::{read_wav, write_wav, Error, SampleBuffer};

fn spec(channels: u16, bits: u16, format: SampleFormat) -> WavSpec {
    WavSpec {
        channels,
        sample_rate: 8000,
        bits_per_sample: bits,
        sample_format: format,
    }
}

#[test]
fn pcm16_scales_by_32768() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let mut w = WavWriter::create(&path, spec(1, 16, SampleFormat::Int)).unwrap();
    w.write_sample(0i16).unwrap();
    w.write_sample(16384i16).unwrap();
    w.finalize().unwrap();
    let buf = read_wav(&path).unwrap();
    assert_eq!(buf.samples(), &[0.0, 0.5]);
    assert_eq!(buf.sample_rate_hz(), 8000);
}

#[test]
fn float32_is_read_as_is() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    let mut w = WavWriter::create(&path, spec(1, 32, SampleFormat::Float)).unwrap();
    for v in [0.25f32, -0.75] {
        w.write_sample(v).unwrap();
    }
    w.finalize().unwrap();
    assert_eq!(read_wav(&path).unwrap().samples(), &[0.25, -0.75]);
}

#[test]
fn written_payload_and_clamp() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.wav");
    write_wav(
        &SampleBuffer::new(vec![0.0, 0.5, 2.0, -3.0], 8000).unwrap(),
        &path,
    )
    .unwrap();
    let mut r = hound::WavReader::open(&path).unwrap();
    assert_eq!(r.spec().bits_per_sample, 16);
    let pcm: Vec<i16> = r.samples::<i16>().map(|s| s.unwrap()).collect();
    assert_eq!(pcm, vec![0, 16384, i16::MAX, i16::MIN]);
}

#[test]
fn stereo_and_other_formats_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.wav");
    let mut w = WavWriter::create(&path, spec(2, 16, SampleFormat::Int)).unwrap();
    for _ in 0..4 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    assert!(matches!(read_wav(&path), Err(Error::UnsupportedFormat(_))));

    let path = dir.path().join("p24.wav");
    let mut w = WavWriter::create(&path, spec(1, 24, SampleFormat::Int)).unwrap();
    w.write_sample(5i32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(read_wav(&path), Err(Error::UnsupportedFormat(_))));
}

#[test]
fn garbage_and_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.wav");
    std::fs::write(&path, b"RIFFnot really a wave file").unwrap();
    assert!(matches!(read_wav(&path), Err(Error::MalformedHeader(_))));

    let path = dir.path().join("e.wav");
    WavWriter::create(&path, spec(1, 16, SampleFormat::Int))
        .unwrap()
        .finalize()
        .unwrap();
    assert!(matches!(read_wav(&path), Err(Error::EmptyAudio)));

    let missing = dir.path().join("missing.wav");
    match read_wav(&missing) {
        Err(Error::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn sine_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sine.wav");
    let s: Vec<f64> = (0..8000)
        .map(|n| 0.9 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 8000.0).sin())
        .collect();
    let buf = SampleBuffer::new(s.clone(), 8000).unwrap();
    write_wav(&buf, &path).unwrap();
    let back = read_wav(&path).unwrap();
    for (a, b) in back.samples().iter().zip(&s) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
    // writing never touches the caller's buffer
    assert_eq!(buf.samples(), &s[..]);
}
