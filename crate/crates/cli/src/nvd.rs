//! Offline NVD feed ingestion: parse the documented JSON subset, map CVE
//! records onto scenario exploit templates by a keyword table over affected
//! products and descriptions, and take a seeded random subsample.

use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use breachsim_core::env::config::ExploitSpec;
use breachsim_core::model::ConfigPredicate;
use breachsim_core::seeds::rng_from;

use crate::error::CliError;

// Subset of the NVD 1.1 feed schema actually consumed.
#[derive(Debug, Deserialize)]
struct Feed {
    #[serde(rename = "CVE_Items")]
    items: Vec<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct Item {
    cve: Cve,
    #[serde(default)]
    configurations: Option<Configurations>,
    #[serde(default)]
    impact: Option<Impact>,
}

#[derive(Debug, Deserialize)]
struct Cve {
    #[serde(rename = "CVE_data_meta")]
    meta: Meta,
    #[serde(default)]
    description: Option<Description>,
}

#[derive(Debug, Deserialize)]
struct Meta {
    #[serde(rename = "ID")]
    id: String,
}

#[derive(Debug, Deserialize)]
struct Description {
    #[serde(default)]
    description_data: Vec<DescriptionData>,
}

#[derive(Debug, Deserialize)]
struct DescriptionData {
    #[serde(default)]
    value: String,
}

#[derive(Debug, Deserialize)]
struct Configurations {
    #[serde(default)]
    nodes: Vec<Node>,
}

#[derive(Debug, Deserialize)]
struct Node {
    #[serde(default)]
    cpe_match: Vec<CpeMatch>,
}

#[derive(Debug, Deserialize)]
struct CpeMatch {
    #[serde(default)]
    cpe23Uri: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Impact {
    #[serde(rename = "baseMetricV3")]
    #[serde(default)]
    v3: Option<BaseMetricV3>,
    #[serde(rename = "baseMetricV2")]
    #[serde(default)]
    v2: Option<BaseMetricV2>,
}

#[derive(Debug, Deserialize)]
struct BaseMetricV3 {
    #[serde(rename = "cvssV3")]
    cvss: Cvss,
}

#[derive(Debug, Deserialize)]
struct BaseMetricV2 {
    #[serde(rename = "cvssV2")]
    cvss: Cvss,
}

#[derive(Debug, Deserialize)]
struct Cvss {
    #[serde(rename = "baseScore")]
    base_score: f64,
}

/// Keywords that map product strings and descriptions onto an app slot.
fn keywords_for(app: &str) -> Vec<&'static str> {
    match app {
        "vpn" => vec!["vpn"],
        "rdp" => vec!["rdp", "remote desktop"],
        "active_directory" => vec!["active directory", "active_directory", "netlogon"],
        "password_mgmt" => vec!["password"],
        "fortios" => vec!["forti"],
        _ => vec![],
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub exploits: Vec<ExploitSpec>,
    pub records_seen: usize,
    pub skipped: usize,
}

/// Parse a feed file and map records to exploit templates: success
/// probability is the CVSS base score / 10, value 1.0, duration 1 step, and
/// the requirement is "the matched app is installed". Records that fail to
/// parse, carry no score, or match no app slot are skipped (counted). A
/// seeded subsample of the requested size is returned.
pub fn ingest_nvd(
    path: &Path,
    sample: usize,
    seed: u64,
    apps: &[String],
) -> Result<IngestOutcome, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read NVD feed {}: {e}", path.display())))?;
    let feed: Feed = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("NVD feed does not parse: {e}")))?;
    let mut mapped: Vec<ExploitSpec> = Vec::new();
    let mut skipped = 0usize;
    let records_seen = feed.items.len();
    for raw in feed.items {
        let item: Item = match serde_json::from_value(raw) {
            Ok(i) => i,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let score = match &item.impact {
            Some(Impact { v3: Some(m), .. }) => m.cvss.base_score,
            Some(Impact { v2: Some(m), .. }) => m.cvss.base_score,
            _ => {
                skipped += 1;
                continue;
            }
        };
        if !(0.0..=10.0).contains(&score) {
            skipped += 1;
            continue;
        }
        let mut haystack = String::new();
        if let Some(desc) = &item.cve.description {
            for d in &desc.description_data {
                haystack.push_str(&d.value.to_lowercase());
                haystack.push(' ');
            }
        }
        if let Some(cfgs) = &item.configurations {
            for node in &cfgs.nodes {
                for m in &node.cpe_match {
                    if let Some(uri) = &m.cpe23Uri {
                        haystack.push_str(&uri.to_lowercase());
                        haystack.push(' ');
                    }
                }
            }
        }
        let app_slot = apps.iter().position(|app| {
            keywords_for(app).iter().any(|k| haystack.contains(k))
        });
        let Some(app) = app_slot else {
            skipped += 1;
            continue;
        };
        mapped.push(ExploitSpec {
            name: item.cve.meta.id,
            requires: ConfigPredicate::app_installed(app as u32),
            duration: 1,
            value: 1.0,
            success_prob: score / 10.0,
            root: true,
        });
    }
    if sample == 0 {
        return Ok(IngestOutcome {
            exploits: Vec::new(),
            records_seen,
            skipped,
        });
    }
    if mapped.is_empty() {
        return Err(CliError::runtime(format!(
            "no ingestible records in {} ({} seen, {} skipped)",
            path.display(),
            records_seen,
            skipped
        )));
    }
    // seeded subsample without replacement
    let mut rng = rng_from(seed, &[breachsim_core::seeds::tag("nvd-sample")]);
    let take = sample.min(mapped.len());
    for i in 0..take {
        let j = rng.gen_range(i..mapped.len());
        mapped.swap(i, j);
    }
    mapped.truncate(take);
    Ok(IngestOutcome {
        exploits: mapped,
        records_seen,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volt_apps() -> Vec<String> {
        breachsim_core::env::EnvConfig::volt_typhoon().apps
    }

    fn fixture(name: &str) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name)
    }

    #[test]
    fn three_record_fixture_maps_by_hand() {
        let out = ingest_nvd(&fixture("nvd_sample.json"), 3, 1, &volt_apps()).unwrap();
        assert_eq!(out.records_seen, 3);
        assert_eq!(out.skipped, 0);
        assert_eq!(out.exploits.len(), 3);
        let mut by_name: Vec<(&str, f64)> = out
            .exploits
            .iter()
            .map(|e| (e.name.as_str(), e.success_prob))
            .collect();
        by_name.sort();
        assert_eq!(
            by_name,
            vec![
                ("CVE-2024-1111", 0.98),
                ("CVE-2024-2222", 0.75),
                ("CVE-2024-3333", 0.50),
            ]
        );
    }

    #[test]
    fn sample_zero_is_empty() {
        let out = ingest_nvd(&fixture("nvd_sample.json"), 0, 1, &volt_apps()).unwrap();
        assert!(out.exploits.is_empty());
        assert_eq!(out.records_seen, 3);
    }

    #[test]
    fn same_seed_same_subsample() {
        let a = ingest_nvd(&fixture("nvd_sample.json"), 2, 9, &volt_apps()).unwrap();
        let b = ingest_nvd(&fixture("nvd_sample.json"), 2, 9, &volt_apps()).unwrap();
        let names = |o: &IngestOutcome| o.exploits.iter().map(|e| e.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(&a), names(&b));
        assert_eq!(a.exploits.len(), 2);
    }

    #[test]
    fn malformed_and_unmappable_records_are_skipped_with_counts() {
        let out = ingest_nvd(&fixture("nvd_mixed.json"), 10, 1, &volt_apps()).unwrap();
        assert_eq!(out.records_seen, 4);
        assert_eq!(out.skipped, 3); // no-impact, unmappable, malformed shape
        assert_eq!(out.exploits.len(), 1);
        assert_eq!(out.exploits[0].name, "CVE-2024-9999");
    }

    #[test]
    fn empty_result_with_positive_sample_is_an_error() {
        let err = ingest_nvd(&fixture("nvd_empty.json"), 3, 1, &volt_apps()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
