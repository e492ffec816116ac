use serde::{Deserialize, Serialize};

use super::LlmError;

/// Endpoint settings. The key itself is never stored: only the name of the
/// environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub retries: u32,
    /// First retry delay; doubled on every further retry.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60.0,
            retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

const KEYS: &[&str] = &[
    "base_url",
    "model",
    "api_key_env",
    "temperature",
    "max_tokens",
    "timeout_secs",
    "retries",
    "backoff_ms",
    "max_in_flight",
];

impl ModelConfig {
    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn from_kv_text(text: &str) -> Result<Self, LlmError> {
        let mut cfg = ModelConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| LlmError::Config {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim().trim_matches('"'))
                .map_err(|message| LlmError::Config {
                    line: i + 1,
                    message,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{key}` needs a number, found `{v}`"))
        }
        match key {
            "base_url" => self.base_url = value.to_string(),
            "model" => self.model = value.to_string(),
            "api_key_env" => {
                self.api_key_env = (!value.is_empty()).then(|| value.to_string())
            }
            "api_key" => {
                return Err("secrets are not accepted in config files; set `api_key_env` to the name of an environment variable".into())
            }
            "temperature" => self.temperature = num(key, value)?,
            "max_tokens" => self.max_tokens = num(key, value)?,
            "timeout_secs" => self.timeout_secs = num(key, value)?,
            "retries" => self.retries = num(key, value)?,
            "backoff_ms" => self.backoff_ms = num(key, value)?,
            "max_in_flight" => self.max_in_flight = num(key, value)?,
            other => return Err(format!("unknown key `{other}`; known keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |message: &str| {
            Err(LlmError::Config {
                line: 0,
                message: message.to_string(),
            })
        };
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return bad("timeout_secs must be positive");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a non-negative number");
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "base_url = {}\nmodel = {}\napi_key_env = {}\ntemperature = {}\nmax_tokens = {}\ntimeout_secs = {}\nretries = {}\nbackoff_ms = {}\nmax_in_flight = {}\n",
            self.base_url,
            self.model,
            self.api_key_env.as_deref().unwrap_or(""),
            self.temperature,
            self.max_tokens,
            self.timeout_secs,
            self.retries,
            self.backoff_ms,
            self.max_in_flight
        )
    }

    /// Reads the key from the environment, if a variable is configured.
    pub fn api_key(&self) -> Result<Option<String>, LlmError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| LlmError::MissingApiKey(var.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig::from_kv_text(
            "# endpoint\nbase_url = https://example.test/v1\nmodel = m\napi_key_env = MY_KEY\nretries = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.retries, 2);
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(ModelConfig::from_kv_text(&cfg.to_kv_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_secrets_and_bad_values() {
        assert!(ModelConfig::from_kv_text("api_key = sk-123").is_err());
        assert!(ModelConfig::from_kv_text("timeout_secs = 0").is_err());
        assert!(ModelConfig::from_kv_text("retries = -1").is_err());
        assert!(ModelConfig::from_kv_text("colour = red").is_err());
    }

    #[test]
    fn serialized_config_holds_no_secret() {
        let var = "CGTRACK_TEST_SECRET_KEY";
        std::env::set_var(var, "super-secret-value");
        let cfg = ModelConfig {
            api_key_env: Some(var.into()),
            ..ModelConfig::default()
        };
        assert_eq!(cfg.api_key().unwrap().as_deref(), Some("super-secret-value"));
        assert!(!cfg.to_kv_text().contains("super-secret-value"));
        assert!(!serde_json::to_string(&cfg).unwrap().contains("super-secret-value"));
    }
}
