use std::f64::consts::PI;

use approx::assert_relative_eq;

use super::*;
use crate::bubble::{BubbleParams, DriveSignal};
use crate::network::Vec3;
use crate::tracks::Event;

fn small_tx(n_elements: usize) -> TransducerConfig {
    TransducerConfig {
        n_elements,
        record_depth: 15e-3,
        ..TransducerConfig::default()
    }
}

fn event(id: u64, p: [f64; 3]) -> Event {
    Event {
        frame: 0,
        bubble_id: id,
        position: p,
        speed: None,
        r_frac: None,
    }
}

fn peak(d: &DriveSignal) -> (f64, f64) {
    let (i, v) = d
        .samples
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    (d.t0 + i as f64 * d.dt, v)
}

fn lerp(v: &[f64], x: f64) -> f64 {
    if x < 0.0 || x >= (v.len() - 1) as f64 {
        return 0.0;
    }
    let i = x.floor() as usize;
    v[i] + (v[i + 1] - v[i]) * (x - i as f64)
}

#[test]
fn single_element_time_of_flight_and_spreading() {
    let tx = small_tx(1);
    let near = transmit_pressure_at(&Vec3::new(0.0, 0.0, 0.01), &tx, 0.0).unwrap();
    let far = transmit_pressure_at(&Vec3::new(0.0, 0.0, 0.02), &tx, 0.0).unwrap();
    let (t1, a1) = peak(&near);
    let (t2, a2) = peak(&far);
    assert!((t1 - 0.01 / tx.c).abs() <= tx.ode_dt(), "{t1}");
    assert!((t2 - 0.02 / tx.c).abs() <= tx.ode_dt(), "{t2}");
    assert_relative_eq!(a1, tx.amplitude, max_relative = 1e-3);
    assert_relative_eq!(a2, 0.5 * a1, max_relative = 1e-3);
}

#[test]
fn array_drive_matches_summed_element_delays() {
    let tx = TransducerConfig {
        n_elements: 128,
        ..TransducerConfig::default()
    };
    let point = Vec3::new(0.0, 0.0, 0.02);
    let drive = transmit_pressure_at(&point, &tx, 0.0).unwrap();
    let (pulse, half) = transmit_pulse(&tx);
    let dt = tx.ode_dt();
    let per_element = tx.amplitude / 128.0 * 0.01;
    let mut max_err = 0.0f64;
    let mut best = (0.0, 0.0f64);
    for (i, &v) in drive.samples.iter().enumerate() {
        let t = drive.t0 + i as f64 * dt;
        let mut want = 0.0;
        for e in 0..128 {
            let x = (e as f64 - 63.5) * tx.pitch;
            let r = (x * x + 0.02f64 * 0.02).sqrt();
            want += per_element / r * lerp(&pulse, (t - r / tx.c) / dt + half as f64);
        }
        max_err = max_err.max((v - want).abs());
        if want.abs() > best.1 {
            best = (t, want.abs());
        }
    }
    assert!(max_err < 1e-9 * best.1, "{max_err}");
    let (t_peak, _) = peak(&drive);
    assert!((t_peak - best.0).abs() <= 1.0 / tx.fs);
    assert!((t_peak - 0.02 / tx.c).abs() <= 1.0 / tx.fs, "{t_peak}");
}

#[test]
fn point_behind_array_is_rejected() {
    let tx = small_tx(4);
    assert!(matches!(
        transmit_pressure_at(&Vec3::new(0.0, 0.0, -1e-3), &tx, 0.0),
        Err(crate::Error::Domain(_))
    ));
}

#[test]
fn impulse_scatter_returns_the_receive_kernel() {
    let tx = small_tx(1);
    let dt = tx.ode_dt();
    let (h, half) = impulse_response(tx.f0, tx.bandwidth, dt);
    let mut samples = vec![0.0; 64];
    samples[0] = 1.0 / dt;
    let scatter = DriveSignal::new(0.0, dt, samples).unwrap();
    // doubling the distance doubles the delay and halves the amplitude
    for d in [0.01, 0.02] {
        let rf = receive_convolve(&scatter, &Vec3::new(0.0, 0.0, d), &tx).unwrap();
        let (start, values) = &rf.elements[0];
        let tof = d / tx.c;
        let mut best = (0, 0.0f64);
        for (k, &v) in values.iter().enumerate() {
            let t = (start + k) as f64 / tx.fs;
            let want = lerp(&h, (t - tof) / dt + half as f64) / d;
            assert!((v - want).abs() < 1e-9 * h[half] / d, "sample {k}");
            if v.abs() > best.1 {
                best = (start + k, v.abs());
            }
        }
        assert!((best.0 as f64 / tx.fs - tof).abs() <= 1.0 / tx.fs);
    }
}

#[test]
fn identical_bubbles_add_exactly() {
    let tx = small_tx(16);
    let sim = Simulator::new(&tx).unwrap();
    let pop = Population::default();
    let one = sim.clean_frame(&[event(0, [0.0, 0.0, 8e-3])], &pop).unwrap();
    let two = sim
        .clean_frame(&[event(0, [0.0, 0.0, 8e-3]), event(1, [0.0, 0.0, 8e-3])], &pop)
        .unwrap();
    let scale = one.max_abs();
    assert!(scale > 0.0);
    for (a, b) in one.data.iter().zip(&two.data) {
        assert!((2.0 * a - b).abs() <= 1e-10 * scale);
    }
}

#[test]
fn receive_chain_is_linear_over_bubble_sets() {
    let tx = small_tx(16);
    let sim = Simulator::new(&tx).unwrap();
    let pop = Population {
        r0_spread: 0.2,
        seed: 9,
        ..Population::default()
    };
    let a = [event(0, [0.5e-3, 0.0, 6e-3]), event(3, [-1e-3, 0.2e-3, 9e-3])];
    let b = [event(7, [2e-3, 0.0, 11e-3])];
    let all: Vec<Event> = a.iter().chain(&b).cloned().collect();
    let fa = sim.clean_frame(&a, &pop).unwrap();
    let fb = sim.clean_frame(&b, &pop).unwrap();
    let fu = sim.clean_frame(&all, &pop).unwrap();
    let scale = fu.max_abs();
    for i in 0..fu.data.len() {
        assert!((fa.data[i] + fb.data[i] - fu.data[i]).abs() <= 1e-10 * scale);
    }
}

#[test]
fn nearest_element_receives_most_energy() {
    let tx = small_tx(32);
    let sim = Simulator::new(&tx).unwrap();
    for target in [5usize, 16, 27] {
        let x = tx.element_x(target);
        let frame = sim.clean_frame(&[event(0, [x, 0.0, 7e-3])], &Population::default()).unwrap();
        let energy: Vec<f64> = (0..32).map(|e| frame.channel(0, e).iter().map(|v| v * v).sum()).collect();
        let best = (0..32).max_by(|&i, &j| energy[i].total_cmp(&energy[j])).unwrap();
        assert_eq!(best, target);
    }
}

#[test]
fn white_noise_matches_snr() {
    let tx = small_tx(32);
    let noise = NoiseConfig {
        white_snr_db: Some(20.0),
        reference_amplitude: Some(2.0),
        ..NoiseConfig::default()
    };
    let frame = simulate_frame(&[], &Population::default(), &tx, &noise, 5).unwrap();
    let n = frame.data.len() as f64;
    let mean = frame.data.iter().sum::<f64>() / n;
    let var = frame.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let want = (2.0 / 10.0f64).powi(2);
    assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
}

#[test]
fn colored_noise_has_its_level_and_band() {
    let tx = small_tx(32);
    let noise = NoiseConfig {
        colored: Some(ColoredNoise {
            f_lo: 3e6,
            f_hi: 7e6,
            level_db: -20.0,
        }),
        reference_amplitude: Some(1.0),
        ..NoiseConfig::default()
    };
    let mut frame = RfFrame::for_transducer(&tx);
    apply_noise(&mut frame, &tx, &noise, 1.0, 3).unwrap();
    let rms = (frame.data.iter().map(|v| v * v).sum::<f64>() / frame.data.len() as f64).sqrt();
    assert!((rms / 0.1 - 1.0).abs() < 0.05, "{rms}");
    // nothing at DC
    let n = frame.n_samples as f64;
    let dc: f64 = frame.channel(0, 0).iter().sum::<f64>() / n;
    assert!(dc.abs() < 1e-12);
}

#[test]
fn tgc_raises_the_noise_floor_at_its_slope() {
    let tx = TransducerConfig {
        n_elements: 64,
        record_depth: 30e-3,
        ..TransducerConfig::default()
    };
    let slope = 1.5;
    let noise = NoiseConfig {
        colored: Some(ColoredNoise {
            f_lo: 2e6,
            f_hi: 8e6,
            level_db: 0.0,
        }),
        tgc_db_per_cm: slope,
        reference_amplitude: Some(1.0),
        ..NoiseConfig::default()
    };
    let mut frame = RfFrame::for_transducer(&tx);
    apply_noise(&mut frame, &tx, &noise, 1.0, 11).unwrap();
    let n = frame.n_samples;
    let windows = 8;
    let w = n / windows;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..windows {
        let range = k * w..(k + 1) * w;
        let mut p = 0.0;
        for e in 0..64 {
            p += frame.channel(0, e)[range.clone()].iter().map(|v| v * v).sum::<f64>();
        }
        let mid = (k as f64 + 0.5) * w as f64;
        xs.push(0.5 * tx.c * mid / tx.fs * 100.0);
        ys.push(10.0 * (p / (64 * w) as f64).log10());
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let fitted = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((fitted - slope).abs() < 0.5, "{fitted}");
}

#[test]
fn frames_are_reproducible_across_thread_counts() {
    let tx = small_tx(16);
    let events = [event(0, [0.0, 0.0, 6e-3]), event(1, [1e-3, 0.0, 9e-3]), event(2, [-2e-3, 0.0, 12e-3])];
    let noise = NoiseConfig {
        white_snr_db: Some(30.0),
        colored: Some(ColoredNoise {
            f_lo: 3e6,
            f_hi: 7e6,
            level_db: -25.0,
        }),
        tgc_db_per_cm: 0.5,
        ..NoiseConfig::default()
    };
    let pop = Population {
        r0_spread: 0.1,
        seed: 4,
        ..Population::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_frame(&events, &pop, &tx, &noise, 77).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = simulate_frame(&events, &pop, &tx, &noise, 78).unwrap();
    assert_ne!(a, c);
}

fn image_of(tx: &TransducerConfig, events: &[Event], grid: ImageGrid) -> ComplexImage {
    let sim = Simulator::new(tx).unwrap();
    let frame = sim.clean_frame(events, &Population::default()).unwrap();
    let cfg = BeamformConfig {
        grid,
        apodization: Apodization::Hann,
        f_number: None,
    };
    beamform_das(&frame, tx, &cfg).unwrap()
}

fn argmax(img: &ComplexImage) -> (f64, f64) {
    let env = img.envelope();
    let k = (0..env.len()).max_by(|&i, &j| env[i].total_cmp(&env[j])).unwrap();
    let g = img.grid;
    (g.x(k % g.nx), g.z(k / g.nx))
}

#[test]
fn single_bubble_image_peaks_at_the_bubble() {
    let tx = small_tx(64);
    let lambda = tx.wavelength();
    for (x, z) in [(0.0, 8e-3), (1.3e-3, 10e-3), (-2.1e-3, 6.5e-3)] {
        let grid = ImageGrid::covering(x - 1e-3, x + 1e-3, z - 1e-3, z + 1e-3, lambda / 8.0).unwrap();
        let img = image_of(&tx, &[event(0, [x, 0.0, z])], grid);
        let (px, pz) = argmax(&img);
        let err = ((px - x).powi(2) + (pz - z).powi(2)).sqrt();
        assert!(err <= lambda / 2.0, "({x}, {z}) -> ({px}, {pz}), error {err}");
    }
}

#[test]
fn overlapping_psfs_interfere_coherently() {
    let tx = small_tx(64);
    let lambda = tx.wavelength();
    let z = 8e-3;
    let a = event(0, [-0.5 * lambda, 0.0, z]);
    let b = event(1, [0.5 * lambda, 0.0, z]);
    let grid = ImageGrid::covering(-1.5e-3, 1.5e-3, z - 1e-3, z + 1e-3, lambda / 8.0).unwrap();
    let ea = image_of(&tx, &[a], grid).envelope();
    let eb = image_of(&tx, &[b], grid).envelope();
    let eab = image_of(&tx, &[a, b], grid).envelope();
    let sum: Vec<f64> = ea.iter().zip(&eb).map(|(x, y)| x + y).collect();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let diff: Vec<f64> = eab.iter().zip(&sum).map(|(x, y)| x - y).collect();
    assert!(rms(&diff) / rms(&sum) > 0.01);
}

#[test]
fn empty_rf_gives_zero_image() {
    let tx = small_tx(8);
    let frame = RfFrame::for_transducer(&tx);
    let cfg = BeamformConfig::for_transducer(&tx, 2e-3).unwrap();
    let img = beamform_das(&frame, &tx, &cfg).unwrap();
    assert!(img.data.iter().all(|c| c.norm() == 0.0));
    let b = envelope_log(&img, 60.0);
    assert!(b.db.iter().all(|&v| v == -60.0));
}

#[test]
fn log_compression_examples() {
    use rustfft::num_complex::Complex64;
    let grid = ImageGrid {
        x0: 0.0,
        dx: 1e-4,
        nx: 4,
        z0: 1e-3,
        dz: 1e-4,
        nz: 1,
    };
    let flat = ComplexImage {
        grid,
        data: vec![Complex64::from_polar(3.0, 0.4); 4],
    };
    assert!(envelope_log(&flat, 60.0).db.iter().all(|&v| v.abs() < 1e-12));
    let img = ComplexImage {
        grid,
        data: vec![
            Complex64::new(10.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(1e-4, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    };
    let b = envelope_log(&img, 60.0);
    assert!(b.db[0].abs() < 1e-12);
    assert!((b.db[1] + 20.0).abs() < 1e-12);
    assert_eq!(b.db[2], -60.0);
    assert_eq!(b.db[3], -60.0);
}

/// Local maxima above `floor_db` along a profile.
fn lobes(profile: &[f64], floor_db: f64) -> usize {
    let top = profile.iter().cloned().fold(0.0, f64::max);
    (1..profile.len() - 1)
        .filter(|&i| {
            profile[i] >= profile[i - 1]
                && profile[i] > profile[i + 1]
                && 20.0 * (profile[i] / top).log10() > floor_db
        })
        .count()
}

fn psf_profiles(tx: &TransducerConfig, z: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let lambda = tx.wavelength();
    let step = lambda / 16.0;
    let grid = ImageGrid::covering(-2e-3, 2e-3, z - 1.5e-3, z + 1.5e-3, step).unwrap();
    let img = image_of(tx, &[event(0, [0.0, 0.0, z])], grid);
    let env = img.envelope();
    let k = (0..env.len()).max_by(|&i, &j| env[i].total_cmp(&env[j])).unwrap();
    let (iz, ix) = (k / grid.nx, k % grid.nx);
    let lateral = env[iz * grid.nx..(iz + 1) * grid.nx].to_vec();
    let axial: Vec<f64> = (0..grid.nz).map(|j| env[j * grid.nx + ix]).collect();
    (lateral, axial, step)
}

fn width_6db(profile: &[f64], step: f64) -> f64 {
    let top = profile.iter().cloned().fold(0.0, f64::max);
    profile.iter().filter(|&&v| v >= 0.5 * top).count() as f64 * step
}

#[test]
fn low_drive_psf_is_a_single_lobe() {
    let tx = TransducerConfig {
        amplitude: amplitude_for_mi(0.02, 5e6),
        ..small_tx(64)
    };
    let (lateral, axial, _) = psf_profiles(&tx, 8e-3);
    assert_eq!(lobes(&axial, -40.0), 1);
    // unfocused transmit: receive-only sidelobes stay well below the main lobe
    assert_eq!(lobes(&lateral, -15.0), 1);
}

#[test]
fn axial_extent_shrinks_with_bandwidth() {
    let widths: Vec<f64> = [0.3, 0.6, 1.0]
        .iter()
        .map(|&bw| {
            let tx = TransducerConfig {
                bandwidth: bw,
                n_cycles: 1.0,
                amplitude: amplitude_for_mi(0.02, 5e6),
                ..small_tx(64)
            };
            let (_, axial, step) = psf_profiles(&tx, 8e-3);
            width_6db(&axial, step)
        })
        .collect();
    assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
    // inverse scaling: width × bandwidth roughly constant
    let products: Vec<f64> = widths.iter().zip([0.3, 0.6, 1.0]).map(|(w, b)| w * b).collect();
    let (lo, hi) = products
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &p| (l.min(p), h.max(p)));
    assert!(hi / lo < 1.6, "{widths:?}");
}

#[test]
fn steered_angles_compound() {
    let tx = TransducerConfig {
        angles: vec![-0.1, 0.0, 0.1],
        ..small_tx(32)
    };
    let lambda = tx.wavelength();
    let grid = ImageGrid::covering(-1e-3, 1e-3, 7e-3, 9e-3, lambda / 8.0).unwrap();
    let img = image_of(&tx, &[event(0, [0.2e-3, 0.0, 8e-3])], grid);
    let (px, pz) = argmax(&img);
    assert!(((px - 0.2e-3).powi(2) + (pz - 8e-3).powi(2)).sqrt() <= lambda / 2.0);
}

#[test]
fn impulse_response_has_unit_gain_at_centre() {
    let dt = 1e-9;
    let (h, half) = impulse_response(5e6, 0.6, dt);
    let gain = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in h.iter().enumerate() {
            let t = (k as f64 - half as f64) * dt;
            re += v * (2.0 * PI * f * t).cos() * dt;
            im += v * (2.0 * PI * f * t).sin() * dt;
        }
        (re * re + im * im).sqrt()
    };
    assert!((gain(5e6) - 1.0).abs() < 1e-12);
    // -6 dB at the band edges
    assert!((gain(5e6 * 1.3) - 0.5).abs() < 0.01);
    assert!((gain(5e6 * 0.7) - 0.5).abs() < 0.01);
}

#[test]
fn rf_file_round_trip_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rf.bin");
    let tx = small_tx(4);
    let header = RfHeader::new(&tx, 3);
    let mut frames = Vec::new();
    for k in 0..3 {
        let mut f = RfFrame::for_transducer(&tx);
        for (i, v) in f.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.25 + k as f64).sin();
        }
        frames.push(f);
    }
    let mut w = RfWriter::create(&path, header).unwrap();
    w.write_frame(&frames[0]).unwrap();
    w.write_frame(&frames[1]).unwrap();
    drop(w);
    // simulate a crash mid-frame
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(&[1, 2, 3, 4, 5]);
    std::fs::write(&path, bytes).unwrap();
    let (mut w, done) = RfWriter::resume(&path, header).unwrap();
    assert_eq!(done, 2);
    w.write_frame(&frames[2]).unwrap();
    assert!(w.write_frame(&frames[2]).is_err());
    drop(w);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], &RF_MAGIC);
    let mut r = RfReader::open(&path).unwrap();
    assert_eq!(r.header, header);
    assert_eq!(r.frames_available(), 3);
    for (k, f) in frames.iter().enumerate() {
        let back = r.read_frame(k).unwrap();
        for (a, b) in f.data.iter().zip(&back.data) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
    assert!(r.read_frame(3).is_err());
}

#[test]
fn bmode_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("frame_0000");
    let tx = small_tx(16);
    let grid = ImageGrid::covering(-1e-3, 1e-3, 5e-3, 7e-3, 1e-4).unwrap();
    let img = envelope_log(&image_of(&tx, &[event(0, [0.0, 0.0, 6e-3])], grid), 50.0);
    write_bmode(&stem, &img).unwrap();
    let (g, dr, db) = read_bmode_raw(&stem).unwrap();
    assert_eq!(g, grid);
    assert_eq!(dr, 50.0);
    for (a, b) in img.db.iter().zip(&db) {
        assert_eq!(*a as f32 as f64, *b);
    }
    let pgm = std::fs::read(stem.with_extension("pgm")).unwrap();
    let header = format!("P5\n{} {}\n255\n", grid.nx, grid.nz);
    assert!(pgm.starts_with(header.as_bytes()));
    assert_eq!(pgm.len(), header.len() + grid.len());
    assert!(pgm[header.len()..].contains(&255));
}

#[test]
fn config_validation() {
    let mut tx = TransducerConfig::default();
    tx.fs = 3.0 * tx.f0;
    assert!(tx.validate().is_err());
    let tx = TransducerConfig {
        n_elements: 0,
        ..TransducerConfig::default()
    };
    assert!(tx.validate().is_err());
    let noise = NoiseConfig {
        colored: Some(ColoredNoise {
            f_lo: 5e6,
            f_hi: 20e6,
            level_db: 0.0,
        }),
        ..NoiseConfig::default()
    };
    assert!(noise.validate(25e6).is_err());
    let _ = BubbleParams::default();
}
