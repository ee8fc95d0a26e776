//! Flag values that need more than `FromStr`.

use qgamble::{nash_point, AlicePolicy, BobPolicy, GameConfig};

/// A decimal or a simple fraction such as `8/9`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let x = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if d == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            n / d
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("not a finite number: {s:?}"))
    }
}

fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((name, rest)) => (name.trim(), Some(rest.trim())),
        None => (spec.trim(), None),
    }
}

/// `nash`, `fixed:A` or `spotcheck:q=Q[,alpha=A][,penalty=P]`. A spot-check
/// spec without `alpha` plays the equilibrium weight between checks.
pub fn parse_alice(spec: &str, config: &GameConfig) -> Result<AlicePolicy, String> {
    let policy = match split_spec(spec) {
        ("nash", None) => AlicePolicy::NashHonest,
        ("fixed", Some(a)) => AlicePolicy::FixedAlpha(parse_number(a)?),
        ("spotcheck", Some(kv)) => {
            let (mut q, mut alpha, mut penalty) = (None, None, qgamble::protocol::DEFAULT_PENALTY);
            for pair in kv.split(',') {
                let (k, v) = pair.split_once('=').ok_or_else(|| format!("expected key=value, got {pair:?}"))?;
                let v = parse_number(v)?;
                match k.trim() {
                    "q" => q = Some(v),
                    "alpha" => alpha = Some(v),
                    "penalty" => penalty = v,
                    other => return Err(format!("unknown spotcheck key {other:?}")),
                }
            }
            let alpha_otherwise = match alpha {
                Some(a) => a,
                None => nash_point(config).map_err(|e| e.to_string())?.alpha_star,
            };
            AlicePolicy::SpotCheck { q: q.ok_or("spotcheck needs q=")?, alpha_otherwise, penalty }
        }
        _ => return Err(format!("bad alice policy {spec:?}; expected nash, fixed:A or spotcheck:q=Q,...")),
    };
    policy.validate().map_err(|e| e.to_string())?;
    Ok(policy)
}

/// `nash`, `fixed:B`, `liar` or `liar:B`. A bare `liar` splits like the
/// equilibrium.
pub fn parse_bob(spec: &str, config: Option<&GameConfig>) -> Result<BobPolicy, String> {
    let policy = match split_spec(spec) {
        ("nash", None) => BobPolicy::NashHonest,
        ("fixed", Some(b)) => BobPolicy::FixedBeta(parse_number(b)?),
        ("liar", Some(b)) => BobPolicy::Liar(parse_number(b)?),
        ("liar", None) => {
            let config = config.ok_or("a bare liar needs the game terms; give liar:B")?;
            BobPolicy::Liar(nash_point(config).map_err(|e| e.to_string())?.beta_star)
        }
        _ => return Err(format!("bad bob policy {spec:?}; expected nash, fixed:B or liar:B")),
    };
    policy.validate().map_err(|e| e.to_string())?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(parse_number("8/9").unwrap(), 8.0 / 9.0);
        assert_eq!(parse_number(" 0.25 ").unwrap(), 0.25);
        assert_eq!(parse_number("-1/2").unwrap(), -0.5);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("inf").is_err());
        assert!(parse_number("x").is_err());
    }

    #[test]
    fn policies() {
        let cfg = GameConfig::fair_coin();
        assert_eq!(parse_alice("nash", &cfg).unwrap(), AlicePolicy::NashHonest);
        assert_eq!(parse_alice("fixed:1/3", &cfg).unwrap(), AlicePolicy::FixedAlpha(1.0 / 3.0));
        assert_eq!(
            parse_alice("spotcheck:q=0.1,alpha=0.333,penalty=2", &cfg).unwrap(),
            AlicePolicy::SpotCheck { q: 0.1, alpha_otherwise: 0.333, penalty: 2.0 }
        );
        match parse_alice("spotcheck:q=1", &cfg).unwrap() {
            AlicePolicy::SpotCheck { alpha_otherwise, penalty, .. } => {
                assert!((alpha_otherwise - 1.0 / 3.0).abs() < 1e-12);
                assert_eq!(penalty, 1.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_alice("spotcheck:alpha=0.2", &cfg).is_err());
        assert!(parse_alice("fixed:1.5", &cfg).is_err());
        assert!(parse_alice("greedy", &cfg).is_err());
        assert_eq!(parse_bob("liar:0.25", None).unwrap(), BobPolicy::Liar(0.25));
        assert!(parse_bob("liar", None).is_err());
        assert!(matches!(parse_bob("liar", Some(&cfg)).unwrap(), BobPolicy::Liar(b) if (b - 0.25).abs() < 1e-12));
        assert!(parse_bob("fixed:-0.1", None).is_err());
    }
}
