#![allow(dead_code, clippy::if_same_then_else)]

//! Shared test support: a deterministic generator for NSL-KDD-shaped
//! connection records.
//!
//! The corpus mirrors the real benchmark's layout (41 features, label,
//! difficulty) and its class taxonomy, with two latent binary factors:
//! "storm" (connection-flood counts and error rates) and "spread"
//! (traffic fanned out over many services/hosts). Attacks occupy the
//! (storm, concentrated) and (calm, spread) corners, normal traffic the
//! other two, so no linear function of the features separates the classes
//! while the joint structure is cleanly learnable. Side features (flags,
//! services, byte counts, error rates) correlate with the latent factors,
//! not with the class, to keep single-feature shortcuts closed.
//!
//! Set `AIDL_NSL_DIR` to a directory holding the published KDDTrain+.txt /
//! KDDTest+.txt to run the dataset-scale checks against the real files.

use std::path::{Path, PathBuf};

use aidl::numerics::Rng;

pub const SERVICES_CONCENTRATED: &[&str] = &["ftp", "ftp_data", "http", "pop_3", "smtp"];
pub const SERVICES_SPREAD: &[&str] = &["domain_u", "eco_i", "finger", "other", "private", "telnet"];

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

fn uniform_int(rng: &mut Rng, lo: u32, hi: u32) -> u32 {
    lo + rng.next_index((hi - lo + 1) as usize) as u32
}

fn pick<'a>(rng: &mut Rng, options: &[&'a str]) -> &'a str {
    options[rng.next_index(options.len())]
}

fn rate(v: f64) -> String {
    format!("{:.2}", v.clamp(0.0, 1.0))
}

struct Blueprint {
    label: &'static str,
    storm: bool,
    spread: bool,
    icmp_echo: bool,
    failed_logins: bool,
    root_compromise: bool,
}

fn pick_attack(rng: &mut Rng) -> Blueprint {
    let r = rng.next_f64();
    // DoS and Probe carry the latent-XOR corners; the small R2L/U2R slices
    // sit in normal territory but carry their own host-based markers.
    if r < 0.28 {
        Blueprint {
            label: "neptune",
            storm: true,
            spread: false,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.40 {
        Blueprint {
            label: "smurf",
            storm: true,
            spread: false,
            icmp_echo: true,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.45 {
        Blueprint {
            label: "back",
            storm: true,
            spread: false,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.59 {
        Blueprint {
            label: "satan",
            storm: false,
            spread: true,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.69 {
        Blueprint {
            label: "ipsweep",
            storm: false,
            spread: true,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.77 {
        Blueprint {
            label: "portsweep",
            storm: false,
            spread: true,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.82 {
        Blueprint {
            label: "nmap",
            storm: false,
            spread: true,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.88 {
        Blueprint {
            label: "guess_passwd",
            storm: false,
            spread: false,
            icmp_echo: false,
            failed_logins: true,
            root_compromise: false,
        }
    } else if r < 0.92 {
        Blueprint {
            label: "warezmaster",
            storm: false,
            spread: false,
            icmp_echo: false,
            failed_logins: true,
            root_compromise: false,
        }
    } else if r < 0.95 {
        Blueprint {
            label: "snmpguess",
            storm: false,
            spread: true,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else {
        Blueprint {
            label: if r < 0.98 { "buffer_overflow" } else { "rootkit" },
            storm: false,
            spread: false,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: true,
        }
    }
}

fn pick_normal(rng: &mut Rng) -> Blueprint {
    let r = rng.next_f64();
    if r < 0.55 {
        // plain sessions: calm, concentrated on one service
        Blueprint {
            label: "normal",
            storm: false,
            spread: false,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.85 {
        // busy fan-out (load balancer / peer swarm): storm AND spread
        Blueprint {
            label: "normal",
            storm: true,
            spread: true,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    } else if r < 0.95 {
        // ping traffic: calm, concentrated, icmp echo
        Blueprint {
            label: "normal",
            storm: false,
            spread: false,
            icmp_echo: true,
            failed_logins: false,
            root_compromise: false,
        }
    } else {
        // admin session: calm, concentrated, busy host markers
        Blueprint {
            label: "normal",
            storm: false,
            spread: false,
            icmp_echo: false,
            failed_logins: false,
            root_compromise: false,
        }
    }
}

/// One record in field order F1..F41 plus the label (no difficulty, no
/// trailing dot).
fn generate_fields(rng: &mut Rng, bp: &Blueprint) -> Vec<String> {
    let storm = bp.storm;
    let spread = bp.spread;

    let (protocol, service) = if bp.icmp_echo {
        ("icmp", if rng.next_f64() < 0.5 { "ecr_i" } else { "eco_i" })
    } else if spread {
        (
            if rng.next_f64() < 0.7 { "tcp" } else { "udp" },
            pick(rng, SERVICES_SPREAD),
        )
    } else {
        (
            if rng.next_f64() < 0.85 { "tcp" } else { "udp" },
            pick(rng, SERVICES_CONCENTRATED),
        )
    };

    // flags follow the latent factors, not the class
    let flag = if storm {
        let r = rng.next_f64();
        if r < 0.4 {
            "S0"
        } else if r < 0.8 {
            "SF"
        } else {
            "RSTO"
        }
    } else if spread {
        let r = rng.next_f64();
        if r < 0.4 {
            "REJ"
        } else if r < 0.7 {
            "RSTR"
        } else {
            "SF"
        }
    } else {
        let r = rng.next_f64();
        if r < 0.85 {
            "SF"
        } else if r < 0.95 {
            "REJ"
        } else {
            "S1"
        }
    };

    let duration = if storm {
        0
    } else if rng.next_f64() < 0.6 {
        0
    } else {
        uniform_int(rng, 1, 120)
    };

    let (src_bytes, dst_bytes) = if storm {
        if rng.next_f64() < 0.5 {
            (0, 0)
        } else {
            (uniform_int(rng, 0, 520), uniform_int(rng, 0, 600))
        }
    } else if bp.icmp_echo {
        (uniform_int(rng, 8, 1480), 0)
    } else {
        (uniform_int(rng, 45, 5400), uniform_int(rng, 0, 9200))
    };

    let land = 0;
    let wrong_fragment = 0;
    let urgent = 0;

    let hot = if bp.root_compromise {
        uniform_int(rng, 8, 30)
    } else if rng.next_f64() < 0.9 {
        0
    } else {
        uniform_int(rng, 1, 6)
    };
    let num_failed_logins = if bp.failed_logins {
        uniform_int(rng, 3, 6)
    } else if rng.next_f64() < 0.98 {
        0
    } else {
        1
    };
    let logged_in = if !storm && !spread && rng.next_f64() < 0.7 {
        1
    } else if rng.next_f64() < 0.1 {
        1
    } else {
        0
    };
    let num_compromised = if bp.root_compromise {
        uniform_int(rng, 1, 5)
    } else {
        0
    };
    let root_shell = if bp.root_compromise {
        1
    } else if rng.next_f64() < 0.02 {
        1
    } else {
        0
    };
    let su_attempted = if bp.root_compromise && rng.next_f64() < 0.5 {
        1
    } else {
        0
    };
    let num_root = if bp.root_compromise {
        uniform_int(rng, 1, 8)
    } else {
        0
    };
    let num_file_creations = if bp.root_compromise {
        uniform_int(rng, 1, 4)
    } else if rng.next_f64() < 0.97 {
        0
    } else {
        1
    };
    let num_shells = if bp.root_compromise && rng.next_f64() < 0.6 {
        1
    } else {
        0
    };
    let num_access_files = if rng.next_f64() < 0.95 {
        0
    } else {
        uniform_int(rng, 1, 3)
    };
    let num_outbound_cmds = 0;
    let is_host_login = 0;
    let is_guest_login = if bp.failed_logins && rng.next_f64() < 0.3 {
        1
    } else {
        0
    };

    let count = if storm {
        uniform_int(rng, 200, 511)
    } else {
        uniform_int(rng, 1, 60)
    };
    let srv_count = ((count as f64) * uniform(rng, 0.5, 1.0)).round().max(1.0) as u32;

    let serror = if storm {
        uniform(rng, 0.35, 1.0)
    } else {
        uniform(rng, 0.0, 0.12)
    };
    let srv_serror = (serror + uniform(rng, -0.08, 0.08)).clamp(0.0, 1.0);
    let rerror = if spread {
        uniform(rng, 0.25, 0.9)
    } else {
        uniform(rng, 0.0, 0.2)
    };
    let srv_rerror = (rerror + uniform(rng, -0.08, 0.08)).clamp(0.0, 1.0);

    let same_srv = if spread {
        uniform(rng, 0.0, 0.22)
    } else {
        uniform(rng, 0.82, 1.0)
    };
    let diff_srv = ((1.0 - same_srv) * uniform(rng, 0.6, 1.0)).clamp(0.0, 1.0);
    let srv_diff_host = if spread {
        uniform(rng, 0.3, 1.0)
    } else {
        uniform(rng, 0.0, 0.25)
    };

    let dst_host_count = if spread {
        uniform_int(rng, 120, 255)
    } else {
        uniform_int(rng, 1, 140)
    };
    let dst_host_srv_count = ((dst_host_count as f64) * same_srv * uniform(rng, 0.6, 1.0))
        .round()
        .max(0.0) as u32;

    let fields: Vec<String> = vec![
        duration.to_string(),                                  // F1
        protocol.to_string(),                                  // F2
        service.to_string(),                                   // F3
        flag.to_string(),                                      // F4
        src_bytes.to_string(),                                 // F5
        dst_bytes.to_string(),                                 // F6
        land.to_string(),                                      // F7
        wrong_fragment.to_string(),                            // F8
        urgent.to_string(),                                    // F9
        hot.to_string(),                                       // F10
        num_failed_logins.to_string(),                         // F11
        logged_in.to_string(),                                 // F12
        num_compromised.to_string(),                           // F13
        root_shell.to_string(),                                // F14
        su_attempted.to_string(),                              // F15
        num_root.to_string(),                                  // F16
        num_file_creations.to_string(),                        // F17
        num_shells.to_string(),                                // F18
        num_access_files.to_string(),                          // F19
        num_outbound_cmds.to_string(),                         // F20
        is_host_login.to_string(),                             // F21
        is_guest_login.to_string(),                            // F22
        count.to_string(),                                     // F23
        srv_count.to_string(),                                 // F24
        rate(serror),                                          // F25
        rate(srv_serror),                                      // F26
        rate(rerror),                                          // F27
        rate(srv_rerror),                                      // F28
        rate(same_srv),                                        // F29
        rate(diff_srv),                                        // F30
        rate(srv_diff_host),                                   // F31
        dst_host_count.to_string(),                            // F32
        dst_host_srv_count.to_string(),                        // F33
        rate(same_srv + uniform(rng, -0.06, 0.06)),            // F34
        rate(diff_srv + uniform(rng, -0.06, 0.06)),            // F35
        rate(uniform(rng, 0.0, 0.6)),                          // F36
        rate(srv_diff_host + uniform(rng, -0.06, 0.06)),       // F37
        rate(serror + uniform(rng, -0.06, 0.06)),              // F38
        rate(srv_serror + uniform(rng, -0.06, 0.06)),          // F39
        rate(rerror + uniform(rng, -0.06, 0.06)),              // F40
        rate(srv_rerror + uniform(rng, -0.06, 0.06)),          // F41
    ];
    let mut out = fields;
    out.push(bp.label.to_string());
    out
}

/// NSL-layout lines (43 fields: features, label, difficulty).
pub fn generate_nsl_lines(n: usize, seed: u64, attack_fraction: f64) -> Vec<String> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let bp = if rng.next_f64() < attack_fraction {
                pick_attack(&mut rng)
            } else {
                pick_normal(&mut rng)
            };
            let mut fields = generate_fields(&mut rng, &bp);
            fields.push(uniform_int(&mut rng, 0, 21).to_string());
            fields.join(",")
        })
        .collect()
}

pub fn write_nsl_file(path: &Path, n: usize, seed: u64, attack_fraction: f64) {
    let lines = generate_nsl_lines(n, seed, attack_fraction);
    std::fs::write(path, lines.join("\n") + "\n").expect("write dataset");
}

/// KDD99-layout lines (42 fields, label with a trailing dot), drawn with
/// repetition from a pool of `pool` distinct rows so the file contains
/// duplicates.
pub fn generate_kdd_lines_with_duplicates(
    pool: usize,
    n: usize,
    seed: u64,
    attack_fraction: f64,
) -> Vec<String> {
    let mut rng = Rng::new(seed);
    let base: Vec<String> = (0..pool)
        .map(|_| {
            let bp = if rng.next_f64() < attack_fraction {
                pick_attack(&mut rng)
            } else {
                pick_normal(&mut rng)
            };
            let mut fields = generate_fields(&mut rng, &bp);
            let label = fields.pop().unwrap();
            fields.push(format!("{label}."));
            fields.join(",")
        })
        .collect();
    (0..n)
        .map(|_| base[rng.next_index(base.len())].clone())
        .collect()
}

pub fn write_kdd_file_with_duplicates(
    path: &Path,
    pool: usize,
    n: usize,
    seed: u64,
    attack_fraction: f64,
) {
    let lines = generate_kdd_lines_with_duplicates(pool, n, seed, attack_fraction);
    std::fs::write(path, lines.join("\n") + "\n").expect("write dataset");
}

/// Path to a published NSL-KDD file, when AIDL_NSL_DIR points at one.
pub fn real_nsl_file(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os("AIDL_NSL_DIR")?;
    let path = Path::new(&dir).join(name);
    path.exists().then_some(path)
}
