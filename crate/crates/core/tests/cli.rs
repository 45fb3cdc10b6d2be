use std::process::Command;

fn dmtlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dmtlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &std::process::Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: [&str; 6] = ["--set", "pilot_trials=10000", "--trials", "20000", "--snr-db", "10,15,20"];

#[test]
fn dmt_header_and_known_rows() {
    let out = dmtlab(&["dmt", "--set", "m=1", "--set", "n=2", "--set", "r_grid=0,0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,scenario,diversity"));
    for row in ["0,no-feedback,2", "0,const-fb,4", "0,pc-fb,6", "0.5,no-feedback,1", "0.5,pc-train-fb,3"] {
        assert!(text.lines().any(|l| l == row), "missing {row}");
    }
    assert!(!text.contains('\r'));
}

#[test]
fn sim_is_byte_identical_across_parallelism() {
    let mut a = vec!["sim", "--set", "scenario=NO_FEEDBACK,EST_CSIR_NOISY_FB_PC", "--parallelism", "1", "--seed", "5"];
    a.extend(SMALL);
    let mut b = a.clone();
    b[4] = "8";
    let (x, y) = (dmtlab(&a), dmtlab(&b));
    assert!(x.status.success(), "{}", String::from_utf8_lossy(&x.stderr));
    assert_eq!(x.stdout, y.stdout);
    let text = stdout(&x);
    assert_eq!(
        text.lines().next(),
        Some("snr_db,scenario,trials,outages,p_hat,ci_low,ci_high,mean_fwd_power,mean_fb_power,low_confidence,slope,slope_stderr")
    );
    assert_eq!(text.lines().filter(|l| l.starts_with("summary,")).count(), 2);
}

#[test]
fn config_file_and_output_path() {
    let dir = std::env::temp_dir().join(format!("dmtlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# sweep\nm = 1\nn = 1\nr = 0.2\nscenario = no-feedback\nsnr_db_list = 10, 20, 30\ntrials = 20000\nseed = 3\n").unwrap();
    let csv = dir.join("out.csv");
    let out = dmtlab(&["sim", "-c", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().starts_with("10,NO_FEEDBACK,20000,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes() {
    assert_eq!(dmtlab(&["sim", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(dmtlab(&["sim", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(dmtlab(&["dmt", "--set", "r_grid=2"]).status.code(), Some(2));
    assert_eq!(dmtlab(&["sim", "-c", "/nonexistent/dmtlab.cfg"]).status.code(), Some(2));
    // High SNR with a short pilot run sees no failures: results still written, exit 3.
    let out = dmtlab(&[
        "calibrate", "--set", "m=2", "--set", "n=2", "--set", "r=0.1", "--set", "scenario=PERFECT_CSIR_NOISELESS_FB",
        "--set", "pilot_trials=10000", "--snr-db", "40",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let text = stdout(&out);
    assert!(text.starts_with("snr_db,scenario,level,power,fb_power,pi_hat,fail_hat,low_confidence\n"));
    assert!(text.lines().nth(1).unwrap().ends_with(",1"));
}

#[test]
fn exponents_and_mac_headers() {
    let out = dmtlab(&["exponents", "--snr-db", "30,40,50", "--trials", "10000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(
        text.lines().next(),
        Some("snr_db,region,trials,hits,p_hat,ci_low,ci_high,predicted_exponent,empirical_exponent,empirical_stderr")
    );
    assert!(text.lines().any(|l| l.starts_with("30,E0,10000,")));

    let out = dmtlab(&[
        "mac", "--set", "n=2", "--set", "l_users=2", "--set", "r=0.1", "--set", "pilot_trials=10000", "--trials", "5000",
        "--snr-db", "10,12,14",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("10,MAC_NOISY_FB_PC,5000,")));
    assert!(text.lines().any(|l| l.starts_with("summary,MAC_NO_FEEDBACK,")));
}
