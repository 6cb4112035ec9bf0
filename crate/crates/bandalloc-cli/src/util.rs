//! Flag-parsing helpers shared by the commands. Users and bands are
//! 1-based on the command line ("s1", "s2", ... or bare indices) and
//! 0-based internally.

use crate::error::CliError;

/// Parses a 1-based user reference: "s3" or "3".
pub fn parse_su(token: &str, num_sus: usize) -> Result<usize, String> {
    let digits = token.strip_prefix('s').unwrap_or(token);
    let idx: usize = digits
        .parse()
        .map_err(|_| format!("cannot parse user reference '{token}'"))?;
    if idx == 0 || idx > num_sus {
        return Err(format!("user '{token}' out of range 1..={num_sus}"));
    }
    Ok(idx - 1)
}

/// Parses "s1=0.4,s3=0.2" into 0-based (user, rate) pairs.
pub fn parse_rate_list(s: &str, num_sus: usize) -> Result<Vec<(usize, f64)>, CliError> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        match item.split_once('=') {
            Some((su, rate)) => {
                let su = match parse_su(su, num_sus) {
                    Ok(su) => su,
                    Err(e) => {
                        errors.push(e);
                        continue;
                    }
                };
                match rate.trim().parse::<f64>() {
                    Ok(r) if r >= 0.0 => out.push((su, r)),
                    _ => errors.push(format!("invalid rate in '{item}'")),
                }
            }
            None => errors.push(format!("expected 'sK=rate', got '{item}'")),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Config(errors))
    }
}

/// Parses "s1=2,s2=1" into a band-per-user vector (all users required).
pub fn parse_fixed_map(s: &str, num_bands: usize, num_sus: usize) -> Result<Vec<usize>, CliError> {
    let mut map = vec![None; num_sus];
    let mut errors = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        match item.split_once('=') {
            Some((su, band)) => {
                let su = match parse_su(su, num_sus) {
                    Ok(su) => su,
                    Err(e) => {
                        errors.push(e);
                        continue;
                    }
                };
                match band.trim().parse::<usize>() {
                    Ok(b) if b >= 1 && b <= num_bands => map[su] = Some(b - 1),
                    _ => errors.push(format!("band out of range 1..={num_bands} in '{item}'")),
                }
            }
            None => errors.push(format!("expected 'sK=band', got '{item}'")),
        }
    }
    for (k, slot) in map.iter().enumerate() {
        if slot.is_none() {
            errors.push(format!("user s{} missing from the assignment map", k + 1));
        }
    }
    if errors.is_empty() {
        Ok(map.into_iter().map(Option::unwrap).collect())
    } else {
        Err(CliError::Config(errors))
    }
}

/// Parses "1,2,3" into seeds.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let seeds: Result<Vec<u64>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|i| !i.is_empty())
        .map(str::parse)
        .collect();
    match seeds {
        Ok(seeds) if !seeds.is_empty() => Ok(seeds),
        _ => Err(CliError::Config(vec![format!("cannot parse seed list '{s}'")])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_list_parsing() {
        let rates = parse_rate_list("s1=0.4, s3=0.2", 4).unwrap();
        assert_eq!(rates, vec![(0, 0.4), (2, 0.2)]);
        assert!(parse_rate_list("s9=0.4", 4).is_err());
        assert!(parse_rate_list("s1:0.4", 4).is_err());
        assert!(parse_rate_list("", 4).unwrap().is_empty());
        // Bare indices are accepted too.
        assert_eq!(parse_rate_list("2=0.1", 4).unwrap(), vec![(1, 0.1)]);
    }

    #[test]
    fn fixed_map_parsing() {
        assert_eq!(parse_fixed_map("s1=2,s2=1", 2, 2).unwrap(), vec![1, 0]);
        assert!(parse_fixed_map("s1=2", 2, 2).is_err(), "all users required");
        assert!(parse_fixed_map("s1=3,s2=1", 2, 2).is_err());
    }

    #[test]
    fn seed_parsing() {
        assert_eq!(parse_seeds("1,2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("a,b").is_err());
    }
}
