use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use scoregeo::io::{format_kv, parse_kv, write_atomic};

use crate::CliError;

/// Resolves settings with precedence defaults < config file < flags, recording
/// every resolved value for the manifest.
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_kv(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self { file, used: BTreeSet::new(), resolved: BTreeMap::new() })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: cannot parse `{raw}`: {e}"))),
            None => Ok(None),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let file = self.from_file(key)?;
        let value = flag.or(file).unwrap_or(default);
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// A setting without a default; absent values are left out of the manifest.
    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let file = self.from_file(key)?;
        let value = flag.or(file);
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>, default: PathBuf) -> Result<PathBuf, CliError> {
        let flag = flag.map(|p| p.to_string_lossy().into_owned());
        Ok(PathBuf::from(self.get(key, flag, default.to_string_lossy().into_owned())?))
    }

    /// Rejects config-file keys no setting consumed, and returns the manifest.
    pub fn finish(self) -> Result<BTreeMap<String, String>, CliError> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(CliError::Usage(format!("unknown config keys: {}", names.join(", "))));
        }
        Ok(self.resolved)
    }
}

/// Writes `<out_dir>/<command>.manifest`, creating the directory if needed.
pub fn write_manifest(out_dir: &Path, command: &str, manifest: &BTreeMap<String, String>) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let mut text = format!("# resolved configuration of `{command}`\n");
    text.push_str(&format_kv(manifest));
    write_atomic(&out_dir.join(format!("{command}.manifest")), text.as_bytes())?;
    Ok(())
}

/// A 2D point written `x,y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2(pub [f64; 2]);

impl FromStr for Point2 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(Point2([parse(a)?, parse(b)?]))
    }
}

impl Display for Point2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.0[0], self.0[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolver(file: &[(&str, &str)]) -> Resolver {
        Resolver {
            file: file.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    #[test]
    fn precedence() {
        let mut r = resolver(&[("epochs", "7"), ("seed", "3")]);
        assert_eq!(r.get("epochs", Some(9usize), 1).unwrap(), 9);
        assert_eq!(r.get("seed", None, 0u64).unwrap(), 3);
        assert_eq!(r.get("batch-size", None, 512usize).unwrap(), 512);
        let m = r.finish().unwrap();
        assert_eq!(m["epochs"], "9");
        assert_eq!(m["seed"], "3");
        assert_eq!(m["batch-size"], "512");
    }

    #[test]
    fn unknown_and_malformed_keys() {
        let mut r = resolver(&[("epochs", "x"), ("bogus", "1")]);
        assert!(r.get("epochs", None, 1usize).is_err());
        assert!(r.finish().is_err());
    }

    #[test]
    fn point_round_trip() {
        let p: Point2 = "-0.8, -0.6".parse().unwrap();
        assert_eq!(p, Point2([-0.8, -0.6]));
        assert_eq!(p.to_string().parse::<Point2>().unwrap(), p);
        assert!("1".parse::<Point2>().is_err());
    }
}
