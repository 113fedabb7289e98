//! A small repository reproducing three worked verification examples from the
//! Chromium history, numbered like the original Subversion revisions.
//!
//! * `chrome/browser/net/url_fixer_upper.cc` is imported at r15; its line 542
//!   is replaced by the fix of bug 72492 at r95731.
//! * `media/tools/media_bench/media_bench.cc` is created at r26072 and its
//!   line 353 rewritten at r53193; the fix of bug 68115 at r70413 replaces
//!   lines 352 and 353.
//! * Bug 117110 has no fix commit.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::repo::HistoryWriter;
use crate::error::{Error, Result};
use crate::model::{read_dataset, CatalogEntry, CveRecord, VersionCatalog, VersionId};
use crate::vcs::{GitRepository, RevisionNumbering};

pub const URL_FIXER: &str = "chrome/browser/net/url_fixer_upper.cc";
pub const MEDIA_BENCH: &str = "media/tools/media_bench/media_bench.cc";

const SVN_ROOT: &str = "svn://svn.chromium.org/chrome/trunk/src";
const SVN_UUID: &str = "0039d316-1c4b-4281-b951-d872f2087c98";

/// `(version, snapshot revision, release date)` of the eighteen stable releases.
pub const RELEASES: [(&str, u64, &str); 18] = [
    ("1.0", 6100, "2008-12-11"),
    ("2.0", 15000, "2009-05-21"),
    ("3.0", 27000, "2009-10-12"),
    ("4.0", 47000, "2010-01-25"),
    ("5.0", 55000, "2010-05-25"),
    ("6.0", 60000, "2010-09-02"),
    ("7.0", 65000, "2010-10-21"),
    ("8.0", 69000, "2010-12-02"),
    ("9.0", 72000, "2011-02-03"),
    ("10.0", 78000, "2011-03-08"),
    ("11.0", 84000, "2011-04-27"),
    ("12.0", 90000, "2011-06-07"),
    ("13.0", 95000, "2011-08-02"),
    ("14.0", 100000, "2011-09-16"),
    ("15.0", 105000, "2011-10-25"),
    ("16.0", 110000, "2011-12-13"),
    ("17.0", 115000, "2012-02-08"),
    ("18.0", 120000, "2012-03-28"),
];

pub const DATASET: &str = concat!(
    r#"{"cve_id":"CVE-2011-2822","claimed_versions":["1.0","2.0","3.0","4.0","5.0","6.0","7.0","8.0","9.0","10.0","11.0","12.0","13.0"],"bug_ids":[72492],"published":"2011-08-22"}"#,
    "\n",
    r#"{"cve_id":"CVE-2011-4080","claimed_versions":["1.0","2.0","3.0","4.0","5.0","6.0","7.0","8.0"],"bug_ids":[68115],"published":"2011-11-09"}"#,
    "\n",
    r#"{"cve_id":"CVE-2012-1521","claimed_versions":[{"before":"18.0.1025.168"}],"bug_ids":[117110],"published":"2012-05-01"}"#,
    "\n",
);

pub const VULNERABLE_URL_LINE: &str =
    "  FixupHost(text, parts.host, has_scheme, desired_tld, &url);";
pub const FIXED_URL_LINE: &str =
    "  if (!FixupHost(text, parts.host, has_scheme, desired_tld, &url)) return;";

#[derive(Debug, Clone)]
pub struct Table1Fixture {
    pub dir: PathBuf,
    pub repo: PathBuf,
    pub dataset: Vec<CveRecord>,
    pub catalog: VersionCatalog,
}

impl Table1Fixture {
    pub fn open_repository(&self) -> Result<GitRepository> {
        Ok(GitRepository::open(&self.repo)?.with_numbering(RevisionNumbering::SvnTrailer))
    }
}

fn date(text: &str) -> NaiveDate {
    NaiveDate::parse_from_str(text, "%Y-%m-%d").expect("fixture date")
}

fn seconds(text: &str) -> i64 {
    date(text)
        .and_hms_opt(18, 0, 0)
        .expect("time")
        .and_utc()
        .timestamp()
}

fn url_fixer_upper() -> Vec<String> {
    let mut lines = vec![
        "// Copyright (c) 2008 The Chromium Authors. All rights reserved.".to_string(),
        "// Use of this source code is governed by a BSD-style license.".to_string(),
        String::new(),
        "#include \"chrome/browser/net/url_fixer_upper.h\"".to_string(),
        String::new(),
    ];
    while lines.len() < 541 {
        let n = lines.len() + 1;
        lines.push(match n % 6 {
            0 => String::new(),
            1 => format!("static void FixupStep{n}(std::string* text) {{"),
            5 => "}".to_string(),
            _ => format!("  TrimSegment{n}(text, {n});"),
        });
    }
    lines.push(VULNERABLE_URL_LINE.to_string());
    for n in 543..=640 {
        lines.push(format!("  AppendSegment{n}(&url);"));
    }
    lines
}

fn media_bench() -> Vec<String> {
    let mut lines = vec![
        "// Standalone benchmarking application based on FFmpeg.".to_string(),
        String::new(),
    ];
    while lines.len() < 351 {
        let n = lines.len() + 1;
        lines.push(format!("  bench_option_{n} = ParseOption(argv, {n});"));
    }
    lines.push("  int frame_bytes = codec_context->frame_size * channels;".to_string());
    lines.push("  memcpy(samples, packet.data, packet.size);".to_string());
    for n in 354..=420 {
        lines.push(format!("  ReportTiming({n}, &timer);"));
    }
    lines
}

fn svn_message(summary: &str, rev: u64) -> String {
    format!("{summary}\n\ngit-svn-id: {SVN_ROOT}@{rev} {SVN_UUID}")
}

/// Writes the fixture repository, dataset and catalog into `dir`.
pub fn build(dir: &Path) -> Result<Table1Fixture> {
    if dir.exists()
        && std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some()
    {
        return Err(Error::Config(format!("{} is not empty", dir.display())));
    }
    enum Step {
        Import,
        CreateBench,
        TouchBench,
        FixBench,
        FixUrl,
        Release(&'static str),
    }
    let mut steps: Vec<(u64, &str, Step)> = vec![
        (15, "2008-08-01", Step::Import),
        (26072, "2009-09-10", Step::CreateBench),
        (53193, "2010-07-14", Step::TouchBench),
        (70413, "2010-12-21", Step::FixBench),
        (95731, "2011-08-05", Step::FixUrl),
    ];
    for (label, rev, day) in RELEASES {
        steps.push((rev, day, Step::Release(label)));
    }
    steps.sort_by_key(|s| s.0);

    let mut history = HistoryWriter::new();
    for (rev, day, step) in steps {
        let summary = match step {
            Step::Import => {
                history.write_file(URL_FIXER, url_fixer_upper());
                history.write_file("chrome/VERSION", vec!["0.1".into()]);
                "Initial import of the browser sources.".to_string()
            }
            Step::CreateBench => {
                history.write_file(MEDIA_BENCH, media_bench());
                "Add media_bench, a standalone decoder benchmark.".to_string()
            }
            Step::TouchBench => {
                history.edit(MEDIA_BENCH)[352] =
                    "  memcpy(samples, packet.data, packet.size * channels);".to_string();
                "media_bench: account for channel count when copying samples.".to_string()
            }
            Step::FixBench => {
                let lines = history.edit(MEDIA_BENCH);
                lines[351] = "  int frame_bytes = std::min(codec_context->frame_size * channels, kMaxFrame);".into();
                lines[352] =
                    "  memcpy(samples, packet.data, std::min(packet.size, frame_bytes));".into();
                "media_bench: bound the sample copy by the frame size.\n\nBUG=http://crbug.com/68115\nTEST=none"
                    .to_string()
            }
            Step::FixUrl => {
                history.edit(URL_FIXER)[541] = FIXED_URL_LINE.to_string();
                "Handle host fixup failures in URLFixerUpper.\n\nBUG=72492\nTEST=unit_tests"
                    .to_string()
            }
            Step::Release(label) => {
                history.write_file("chrome/VERSION", vec![label.to_string()]);
                format!("Bump version to {label}.")
            }
        };
        history.commit("chromium", seconds(day), &svn_message(&summary, rev));
        if let Step::Release(label) = step {
            history.tag(&label.replace('.', "_"));
        }
    }
    let repo = dir.join("repo");
    history.write(&repo)?;

    let catalog = VersionCatalog::new(
        RELEASES
            .iter()
            .map(|(label, rev, day)| {
                Ok(CatalogEntry {
                    version: VersionId::parse(label)?,
                    release_date: date(day),
                    snapshot_rev: format!("r{rev}"),
                    official: true,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    )?;
    let dataset = read_dataset(DATASET.as_bytes(), &catalog)?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write("dataset.jsonl", DATASET.to_string())?;
    write("catalog.json", catalog.to_json()? + "\n")?;
    Ok(Table1Fixture {
        dir: dir.to_path_buf(),
        repo,
        dataset,
        catalog,
    })
}
