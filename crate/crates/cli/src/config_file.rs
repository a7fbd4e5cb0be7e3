//! `--config` support: `key = value` lines become long flags unless the
//! command line already sets them.

use std::ffi::OsString;
use std::fs;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`, found {raw:?}", n + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key {:?}", n + 1, key));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn config_path(argv: &[OsString]) -> Result<Option<OsString>, String> {
    for (i, arg) in argv.iter().enumerate() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return argv
                .get(i + 1)
                .cloned()
                .map(Some)
                .ok_or_else(|| "--config needs a path".to_string());
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Ok(Some(path.into()));
        }
    }
    Ok(None)
}

fn sets_flag(argv: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("--{key}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&with_value)
    })
}

/// The command line with config-file flags appended. Flags given
/// explicitly win.
pub fn merged_args(mut argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        if sets_flag(&argv, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => extra.push(OsString::from(format!("--{key}={value}"))),
        }
    }
    argv.extend(extra);
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(xs: &[&str]) -> Vec<OsString> {
        xs.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs() {
        let pairs = parse("# run\nbeta = 0.01\nmax_iterations=4\n\n").unwrap();
        assert_eq!(
            pairs,
            [("beta".into(), "0.01".into()), ("max-iterations".into(), "4".into())]
        );
        assert!(parse("beta 0.01").is_err());
        assert!(parse("config = x").is_err());
    }

    #[test]
    fn explicit_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "beta = 0.01\nmax-iterations = 4\n").unwrap();
        let p = path.to_str().unwrap();
        let merged = merged_args(args(&["geopolar", "--config", p, "polarize", "--beta=0.2"])).unwrap();
        assert_eq!(
            merged,
            args(&["geopolar", "--config", p, "polarize", "--beta=0.2", "--max-iterations=4"])
        );
        assert!(merged_args(args(&["geopolar", "--config", "/nonexistent/x"])).is_err());
        let plain = args(&["geopolar", "synth"]);
        assert_eq!(merged_args(plain.clone()).unwrap(), plain);
    }
}
