//! Synthetic repositories with a planted vulnerability, its fix and
//! breaking commits of known kinds.
//!
//! The forged project is a small C library with two tools. `rdtool` parses a
//! record file; its parser copies the record body into a scratch buffer, and
//! the fix bounds that copy. Each archetype of breaking commit changes the
//! project so that reverse-applying the fix alone no longer revives the bug:
//!
//! | archetype        | change                                   | effect on the port |
//! |------------------|------------------------------------------|--------------------|
//! | `rename`         | scratch variable gets a `_p` suffix      | patch conflict     |
//! | `type_change`    | scratch becomes a `struct scratch_buf`   | patch conflict     |
//! | `remove_tool`    | `rdtool` leaves the build                | PoC cannot launch  |
//! | `input_check`    | file reader rejects inputs over 256 bytes| PoC not triggered  |
//! | `error_handling` | a bad record magic becomes fatal         | PoC not triggered  |
//! | `refactor`       | allocation block moves up two lines      | patch conflict     |
//!
//! Every file is rendered from a small state description, so the same plan
//! always yields the same bytes and the same commit ids.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::categorize::Category;
use crate::oracle::{BuildRecipe, PocSpec, Sanitizer, VerdictKind, HANG_CLASS};
use crate::patch::Granularity;
use crate::porter::{AbortReason, CveCase, FinalState, Limits, Tiers};

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("no C compiler found (tried $CC, cc, gcc, clang)")]
    ToolchainMissing,
    #[error("invalid fixture plan: {0}")]
    InvalidPlan(String),
    #[error("destination {0} is not empty")]
    DestinationNotEmpty(PathBuf),
    #[error("git failed: {0}")]
    Git(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Rename,
    TypeChange,
    RemoveTool,
    InputCheck,
    ErrorHandling,
    Refactor,
}

impl Archetype {
    pub const ALL: [Archetype; 6] = [
        Archetype::Rename,
        Archetype::TypeChange,
        Archetype::RemoveTool,
        Archetype::InputCheck,
        Archetype::ErrorHandling,
        Archetype::Refactor,
    ];

    pub fn category(self) -> Category {
        match self {
            Archetype::Rename => Category::C1,
            Archetype::TypeChange => Category::C2,
            Archetype::RemoveTool => Category::C3,
            Archetype::InputCheck => Category::C4,
            Archetype::ErrorHandling => Category::C5,
            Archetype::Refactor => Category::C6,
        }
    }

    /// The reverse-applied fix no longer applies while this change is present.
    pub fn blocks_patch(self) -> bool {
        matches!(
            self,
            Archetype::Rename | Archetype::TypeChange | Archetype::Refactor
        )
    }

    /// Confined to `src/record.c`/`src/record.h`, so replacing the fixed file
    /// wholesale undoes it.
    fn undone_by_whole_file(self) -> bool {
        matches!(
            self,
            Archetype::Rename
                | Archetype::TypeChange
                | Archetype::Refactor
                | Archetype::ErrorHandling
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PocBehavior {
    /// Heap buffer overflow when the bug is present.
    #[default]
    Overflow,
    /// Endless loop when the bug is present.
    Hang,
    /// The PoC never triggers, not even before the fix.
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedBreaker {
    pub position: usize,
    pub archetype: Archetype,
}

fn one() -> usize {
    1
}

fn hour() -> i64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixturePlan {
    pub seed: u64,
    /// Number of commits, the root included.
    pub history_length: usize,
    /// Position of the (first) fix commit; position 0 is the project
    /// skeleton and position 1 introduces the bug.
    pub fix_index: usize,
    #[serde(default)]
    pub breakers: Vec<PlantedBreaker>,
    /// Filler commits that edit the fixed file (a comment block at its top);
    /// the remaining filler only touches `ChangeLog`.
    #[serde(default)]
    pub noise_commits: usize,
    #[serde(default)]
    pub poc_behavior: PocBehavior,
    /// 1, or 2 when the fix lands in two commits, the second one editing
    /// lines added by the first.
    #[serde(default = "one")]
    pub fix_commits: usize,
    /// Filler positions whose tree does not build; the next commit repairs it.
    #[serde(default)]
    pub unbuildable: Vec<usize>,
    /// Seconds between consecutive commits.
    #[serde(default = "hour")]
    pub spacing_secs: i64,
}

impl FixturePlan {
    pub fn new(seed: u64, history_length: usize, fix_index: usize) -> Self {
        FixturePlan {
            seed,
            history_length,
            fix_index,
            breakers: Vec::new(),
            noise_commits: 0,
            poc_behavior: PocBehavior::Overflow,
            fix_commits: 1,
            unbuildable: Vec::new(),
            spacing_secs: hour(),
        }
    }

    pub fn with_breaker(mut self, position: usize, archetype: Archetype) -> Self {
        self.breakers.push(PlantedBreaker {
            position,
            archetype,
        });
        self
    }

    pub fn last_fix(&self) -> usize {
        self.fix_index + self.fix_commits - 1
    }

    pub fn tip(&self) -> usize {
        self.history_length - 1
    }

    fn filler(&self) -> Vec<usize> {
        (2..self.history_length)
            .filter(|&i| self.slot(i) == Slot::Filler)
            .collect()
    }

    fn slot(&self, i: usize) -> Slot {
        match i {
            0 => Slot::Base,
            1 => Slot::Vulnerable,
            i if (self.fix_index..=self.last_fix()).contains(&i) => Slot::Fix(i - self.fix_index),
            i => match self.breakers.iter().find(|b| b.position == i) {
                Some(b) => Slot::Breaker(b.archetype),
                None => Slot::Filler,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |m: String| Err(ForgeError::InvalidPlan(m));
        if !(1..=2).contains(&self.fix_commits) {
            return bad("fix_commits must be 1 or 2".into());
        }
        if self.fix_index < 2 {
            return bad("fix_index must be at least 2".into());
        }
        if self.last_fix() >= self.history_length {
            return bad("the fix must lie inside the history".into());
        }
        let mut prev = self.last_fix();
        let mut kinds = BTreeSet::new();
        for b in &self.breakers {
            if b.position <= prev {
                return bad(format!(
                    "breaker positions must increase and follow the fix (at {})",
                    b.position
                ));
            }
            if b.position >= self.history_length {
                return bad(format!(
                    "breaker position {} outside the history",
                    b.position
                ));
            }
            if !kinds.insert(b.archetype) {
                return bad(format!("archetype {:?} planted twice", b.archetype));
            }
            prev = b.position;
        }
        let filler = self.filler();
        if self.noise_commits > filler.len() {
            return bad(format!(
                "{} noise commits but only {} filler slots",
                self.noise_commits,
                filler.len()
            ));
        }
        for &u in &self.unbuildable {
            if !filler.contains(&u) || !filler.contains(&(u + 1)) {
                return bad(format!(
                    "unbuildable position {u} must be filler followed by filler"
                ));
            }
            if u + 1 == self.fix_index {
                return bad("the commit before the fix must build".into());
            }
        }
        if self.spacing_secs <= 0 {
            return bad("spacing_secs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Base,
    Vulnerable,
    Fix(usize),
    Breaker(Archetype),
    Filler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitKind {
    Base,
    Vulnerable,
    Noise,
    SourceNoise,
    Unbuildable,
    Fix,
    Breaker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgedCommit {
    pub index: usize,
    pub id: String,
    pub kind: CommitKind,
    /// Committer and author date, seconds since the epoch.
    pub timestamp: i64,
    /// Files whose content changed, by construction.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgedBreaker {
    pub position: usize,
    pub archetype: Archetype,
    pub category: Category,
    pub commit: String,
    pub files_touched: usize,
    /// Most `@@` hunks git reports for one file of this commit.
    pub max_hunks_per_file: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureLedger {
    pub plan: FixturePlan,
    pub cve_id: String,
    pub repo: PathBuf,
    pub poc_input: PathBuf,
    pub compiler: String,
    /// `t0`..`tN` plus `vulnerable`, `fix`, `reference`, `intermediary`, `latest`.
    pub tags: BTreeMap<String, String>,
    pub commits: Vec<ForgedCommit>,
    pub breakers: Vec<ForgedBreaker>,
    pub fix_commits: Vec<String>,
    /// Parent of the first fix commit.
    pub pre_fix: String,
    pub tracked_files: Vec<String>,
    pub recipe: BuildRecipe,
    pub poc: PocSpec,
    pub expected: ExpectedOutcome,
}

impl FixtureLedger {
    pub fn id(&self, index: usize) -> &str {
        &self.commits[index].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.commits.iter().position(|c| c.id == id)
    }

    pub fn tier_index(&self, tier: &str) -> Option<usize> {
        self.index_of(self.tags.get(tier)?)
    }

    /// The case the porter works on for this fixture.
    pub fn case(&self) -> CveCase {
        CveCase {
            cve_id: self.cve_id.clone(),
            project: "forge".into(),
            repo: self.repo.clone(),
            fix_commits: self.fix_commits.clone(),
            weakness: Some("CWE-787".into()),
            poc: self.poc.clone(),
            recipe: self.recipe.clone(),
            tiers: Tiers {
                reference: self.tags["reference"].clone(),
                intermediary: self.tags["intermediary"].clone(),
                latest: self.tags["latest"].clone(),
            },
            tracked_files: self.tracked_files.clone(),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        serde_json::from_slice(&std::fs::read(path)?).map_err(std::io::Error::other)
    }
}

pub const TIERS: [&str; 3] = ["reference", "intermediary", "latest"];

const SCRATCH: &str = "rec_scratch";

#[derive(Debug, Clone, PartialEq, Eq)]
struct State {
    behavior: PocBehavior,
    vulnerable: bool,
    fix_stage: usize,
    renamed: bool,
    typed: bool,
    tool_removed: bool,
    input_check: bool,
    strict_magic: bool,
    refactored: bool,
    notes: Vec<String>,
    changelog: Vec<String>,
    broken_info: bool,
}

impl State {
    fn apply(&mut self, a: Archetype) {
        match a {
            Archetype::Rename => self.renamed = true,
            Archetype::TypeChange => self.typed = true,
            Archetype::RemoveTool => self.tool_removed = true,
            Archetype::InputCheck => self.input_check = true,
            Archetype::ErrorHandling => self.strict_magic = true,
            Archetype::Refactor => self.refactored = true,
        }
    }

    fn render(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();
        files.insert("Makefile".to_string(), self.makefile());
        files.insert(
            "ChangeLog".to_string(),
            self.changelog.iter().map(|l| format!("{l}\n")).collect(),
        );
        files.insert("src/record.h".to_string(), self.header());
        files.insert("src/record.c".to_string(), self.record());
        files.insert("src/store.c".to_string(), self.store());
        if !self.tool_removed {
            files.insert("tools/rdtool.c".to_string(), RDTOOL.to_string());
        }
        let mut info = RDINFO.to_string();
        if self.broken_info {
            info.push_str("#error \"half-finished change\"\n");
        }
        files.insert("tools/rdinfo.c".to_string(), info);
        files
    }

    fn makefile(&self) -> String {
        let tools = if self.tool_removed {
            "rdinfo"
        } else {
            "rdtool rdinfo"
        };
        format!(
            "CC ?= cc\nCFLAGS ?= -g -O0\nTOOLS = {tools}\nLIB = src/record.o src/store.o\n\n\
             all: $(TOOLS)\n\n\
             $(TOOLS): %: tools/%.c $(LIB) src/record.h\n\t$(CC) $(CFLAGS) -Isrc -o $@ tools/$@.c $(LIB)\n\n\
             src/%.o: src/%.c src/record.h\n\t$(CC) $(CFLAGS) -Isrc -c -o $@ $<\n\n\
             clean:\n\trm -f $(TOOLS) src/*.o\n\n.PHONY: all clean\n"
        )
    }

    fn header(&self) -> String {
        let (buf, cap) = match self.behavior {
            PocBehavior::Hang => (256, 200),
            _ => (64, 64),
        };
        let mut s = format!(
            "#ifndef RECORD_H\n#define RECORD_H\n\n#include <stddef.h>\n\n\
             #define REC_MAGIC 'R'\n#define REC_HDR 3\n#define REC_BUF {buf}\n#define REC_CAP {cap}\n\n\
             #define REC_OK 0\n#define REC_ERR_SHORT -1\n#define REC_ERR_MAGIC -2\n#define REC_ERR_NOMEM -3\n#define REC_ERR_RANGE -4\n\n\
             #define STORE_ERR_IO -10\n#define STORE_ERR_LIMIT -11\n\n\
             struct record {{\n\tint kind;\n\tsize_t len;\n\tunsigned long sum;\n}};\n\n"
        );
        if self.typed {
            s.push_str(
                "struct scratch_buf {\n\tunsigned char *data;\n\tsize_t cap;\n};\n\n\
                 struct scratch_buf *scratch_new(size_t cap);\nvoid scratch_free(struct scratch_buf *buf);\n\n",
            );
        }
        s.push_str(
            "void rec_warn(const char *msg);\nvoid rec_error(const char *msg);\n\
             unsigned long rec_checksum(const unsigned char *p, size_t n);\n\
             int rec_parse(const unsigned char *data, size_t len, struct record *out);\n\
             int store_read(const char *path, unsigned char **buf, size_t *len);\n\n#endif\n",
        );
        s
    }

    fn record(&self) -> String {
        let v = if self.renamed {
            format!("{SCRATCH}_p")
        } else {
            SCRATCH.to_string()
        };
        let mut s = String::from("/*\n * Record parsing.\n");
        for n in &self.notes {
            s.push_str(&format!(" * {n}\n"));
        }
        s.push_str(
            " */\n\n#include <stdio.h>\n#include <stdlib.h>\n\n#include \"record.h\"\n\n\
             void rec_warn(const char *msg)\n{\n\tfprintf(stderr, \"warning: %s\\n\", msg);\n}\n\n\
             void rec_error(const char *msg)\n{\n\tfprintf(stderr, \"error: %s\\n\", msg);\n}\n\n\
             unsigned long rec_checksum(const unsigned char *p, size_t n)\n{\n\tunsigned long sum = 0;\n\tsize_t k;\n\n\
             \tfor (k = 0; k < n; k++)\n\t\tsum = sum * 31 + p[k];\n\treturn sum;\n}\n\n",
        );
        if self.typed {
            s.push_str(
                "struct scratch_buf *scratch_new(size_t cap)\n{\n\tstruct scratch_buf *buf = malloc(sizeof(*buf));\n\n\
                 \tif (buf == NULL)\n\t\treturn NULL;\n\tbuf->data = malloc(cap);\n\tif (buf->data == NULL) {\n\
                 \t\tfree(buf);\n\t\treturn NULL;\n\t}\n\tbuf->cap = cap;\n\treturn buf;\n}\n\n\
                 void scratch_free(struct scratch_buf *buf)\n{\n\tfree(buf->data);\n\tfree(buf);\n}\n\n",
            );
        }
        let counter = match self.behavior {
            PocBehavior::Hang => "\tsize_t n;\n\tunsigned char i;\n",
            _ => "\tsize_t n, i;\n",
        };
        s.push_str("int rec_parse(const unsigned char *data, size_t len, struct record *out)\n{\n");
        if self.vulnerable {
            if self.typed {
                s.push_str(&format!("\tstruct scratch_buf *{v};\n"));
            } else {
                s.push_str(&format!("\tunsigned char *{v};\n"));
            }
            s.push_str(counter);
        } else {
            s.push_str("\tsize_t n;\n");
        }
        s.push_str("\n\tif (len < REC_HDR)\n\t\treturn REC_ERR_SHORT;\n");
        if self.strict_magic {
            s.push_str("\tif (data[0] != REC_MAGIC) {\n\t\trec_error(\"bad record magic\");\n\t\treturn REC_ERR_MAGIC;\n\t}\n");
        } else {
            s.push_str("\tif (data[0] != REC_MAGIC)\n\t\trec_warn(\"unexpected record magic\");\n");
        }
        s.push_str("\tn = data[1] | (size_t)data[2] << 8;\n\tif (len < REC_HDR + n)\n\t\treturn REC_ERR_SHORT;\n");
        if !self.vulnerable {
            s.push_str("\tout->kind = data[0];\n\tout->len = n;\n\tout->sum = rec_checksum(data + REC_HDR, n);\n\treturn REC_OK;\n}\n");
            return s;
        }
        let (alloc, release, elem, body) = if self.typed {
            (
                format!("\t{v} = scratch_new(REC_BUF);\n"),
                format!("scratch_free({v});"),
                format!("{v}->data[i]"),
                format!("{v}->data"),
            )
        } else {
            (
                format!("\t{v} = malloc(REC_BUF);\n"),
                format!("free({v});"),
                format!("{v}[i]"),
                v.clone(),
            )
        };
        let alloc = format!("{alloc}\tif ({v} == NULL)\n\t\treturn REC_ERR_NOMEM;\n");
        let header = "\tout->kind = data[0];\n\tout->len = n;\n";
        if self.refactored {
            s.push_str(&alloc);
            s.push_str(header);
        } else {
            s.push_str(header);
            s.push_str(&alloc);
        }
        if self.fix_stage > 0 {
            let code = if self.fix_stage == 1 {
                "REC_ERR_SHORT"
            } else {
                "REC_ERR_RANGE"
            };
            s.push_str(&format!(
                "\tif (n > REC_CAP) {{\n\t\trec_error(\"record too long\");\n\t\t{release}\n\t\treturn {code};\n\t}}\n"
            ));
        }
        s.push_str(&format!(
            "\tfor (i = 0; i < n; i++)\n\t\t{elem} = data[REC_HDR + i];\n\tout->sum = rec_checksum({body}, n);\n\t{release}\n\treturn REC_OK;\n}}\n"
        ));
        s
    }

    fn store(&self) -> String {
        let mut s =
            String::from("#include <stdio.h>\n#include <stdlib.h>\n\n#include \"record.h\"\n\n");
        if self.input_check {
            s.push_str("#define STORE_MAX_INPUT 256\n\n");
        }
        s.push_str(
            "int store_read(const char *path, unsigned char **buf, size_t *len)\n{\n\tFILE *f = fopen(path, \"rb\");\n\tlong size;\n\n\
             \tif (f == NULL)\n\t\treturn STORE_ERR_IO;\n\
             \tif (fseek(f, 0, SEEK_END) != 0 || (size = ftell(f)) < 0) {\n\t\tfclose(f);\n\t\treturn STORE_ERR_IO;\n\t}\n",
        );
        if self.input_check {
            s.push_str("\tif (size > STORE_MAX_INPUT) {\n\t\tfclose(f);\n\t\treturn STORE_ERR_LIMIT;\n\t}\n");
        }
        s.push_str(
            "\trewind(f);\n\t*buf = malloc(size > 0 ? (size_t)size : 1);\n\tif (*buf == NULL) {\n\t\tfclose(f);\n\t\treturn STORE_ERR_IO;\n\t}\n\
             \t*len = fread(*buf, 1, (size_t)size, f);\n\tfclose(f);\n\treturn 0;\n}\n",
        );
        s
    }
}

const RDTOOL: &str = r#"#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "record.h"

static void usage(void)
{
	fprintf(stderr, "usage: rdtool [-v] FILE\n");
}

int main(int argc, char **argv)
{
	struct record rec;
	unsigned char *buf;
	size_t len;
	int verbose = 0;
	int arg = 1;
	int rc;

	if (argc > 1 && strcmp(argv[1], "-v") == 0) {
		verbose = 1;
		arg++;
	}
	if (arg != argc - 1) {
		usage();
		return 64;
	}
	if (store_read(argv[arg], &buf, &len) != 0) {
		fprintf(stderr, "rdtool: cannot read %s\n", argv[arg]);
		return 1;
	}
	rc = rec_parse(buf, len, &rec);
	free(buf);
	if (rc != REC_OK) {
		fprintf(stderr, "rdtool: bad record (%d)\n", rc);
		return 1;
	}
	if (verbose)
		printf("kind %d len %zu\n", rec.kind, rec.len);
	printf("%lu\n", rec.sum);
	return 0;
}
"#;

const RDINFO: &str = r#"#include <stdio.h>
#include <stdlib.h>

#include "record.h"

int main(int argc, char **argv)
{
	unsigned char *buf;
	size_t len;

	if (argc != 2) {
		fprintf(stderr, "usage: rdinfo FILE\n");
		return 64;
	}
	if (store_read(argv[1], &buf, &len) != 0)
		return 1;
	printf("%zu bytes\n", len);
	free(buf);
	return 0;
}
"#;

fn poc_bytes(behavior: PocBehavior) -> Vec<u8> {
    let (n, body): (u16, usize) = match behavior {
        PocBehavior::Overflow => (65, 300),
        PocBehavior::Hang => (300, 300),
        PocBehavior::Clean => (10, 10),
    };
    let mut v = vec![b'Z', (n & 0xff) as u8, (n >> 8) as u8];
    v.extend(std::iter::repeat_n(b'A', body));
    v
}

/// First working C compiler: `$CC`, then `cc`, `gcc`, `clang`.
pub fn find_compiler() -> Option<String> {
    let mut candidates: Vec<String> = std::env::var("CC").ok().into_iter().collect();
    candidates.extend(["cc", "gcc", "clang"].map(String::from));
    candidates.into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success())
    })
}

fn git(repo: &Path, args: &[&str], input: Option<&[u8]>) -> Result<String, ForgeError> {
    let mut cmd = Command::new("git");
    cmd.arg("-C")
        .arg(repo)
        .args(args)
        .env("LC_ALL", "C")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .stdin(if input.is_some() {
            Stdio::piped()
        } else {
            Stdio::null()
        })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn()?;
    if let Some(data) = input {
        child.stdin.take().expect("piped").write_all(data)?;
    }
    let out = child.wait_with_output()?;
    if !out.status.success() {
        return Err(ForgeError::Git(format!(
            "git {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn data(stream: &mut Vec<u8>, bytes: &[u8]) {
    stream.extend_from_slice(format!("data {}\n", bytes.len()).as_bytes());
    stream.extend_from_slice(bytes);
    stream.push(b'\n');
}

const WORDS: [&str; 12] = [
    "tidy", "clarify", "document", "reword", "note", "explain", "annotate", "polish", "describe",
    "touch", "update", "mention",
];

/// Creates `dest/repo`, `dest/poc.bin` and `dest/ledger.json`.
pub fn forge(plan: &FixturePlan, dest: &Path) -> Result<FixtureLedger, ForgeError> {
    plan.validate()?;
    let compiler = find_compiler().ok_or(ForgeError::ToolchainMissing)?;
    if dest.exists() && std::fs::read_dir(dest)?.next().is_some() {
        return Err(ForgeError::DestinationNotEmpty(dest.to_path_buf()));
    }
    std::fs::create_dir_all(dest)?;
    let dest = dest.canonicalize()?;
    let repo = dest.join("repo");

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut filler = plan.filler();
    filler.retain(|i| !plan.unbuildable.contains(i));
    filler.shuffle(&mut rng);
    let source_noise: BTreeSet<usize> = filler.into_iter().take(plan.noise_commits).collect();
    let epoch = 1_420_070_400 + (plan.seed % 1000) as i64 * 86_400;

    let mut state = State {
        behavior: plan.poc_behavior,
        vulnerable: false,
        fix_stage: 0,
        renamed: false,
        typed: false,
        tool_removed: false,
        input_check: false,
        strict_magic: false,
        refactored: false,
        notes: Vec::new(),
        changelog: Vec::new(),
        broken_info: false,
    };
    let mut stream = Vec::new();
    let mut previous: BTreeMap<String, String> = BTreeMap::new();
    let mut commits = Vec::new();
    for i in 0..plan.history_length {
        state.broken_info = false;
        let (kind, message) = match plan.slot(i) {
            Slot::Base => (CommitKind::Base, "Initial record library".to_string()),
            Slot::Vulnerable => {
                state.vulnerable = true;
                (
                    CommitKind::Vulnerable,
                    "Parse records through a scratch buffer".to_string(),
                )
            }
            Slot::Fix(k) => {
                state.fix_stage = if plan.fix_commits == 1 || k == 1 {
                    2
                } else {
                    1
                };
                (
                    CommitKind::Fix,
                    format!(
                        "Reject records longer than REC_CAP ({}/{})",
                        k + 1,
                        plan.fix_commits
                    ),
                )
            }
            Slot::Breaker(a) => {
                state.apply(a);
                (CommitKind::Breaker, format!("{a:?} change"))
            }
            Slot::Filler if plan.unbuildable.contains(&i) => {
                state.broken_info = true;
                (
                    CommitKind::Unbuildable,
                    "Start reworking rdinfo".to_string(),
                )
            }
            Slot::Filler if source_noise.contains(&i) => {
                let word = WORDS[rng.gen_range(0..WORDS.len())];
                state.notes.push(format!("{word} {i}"));
                (CommitKind::SourceNoise, format!("Comment: {word}"))
            }
            Slot::Filler => {
                let word = WORDS[rng.gen_range(0..WORDS.len())];
                state.changelog.push(format!("{i}: {word}"));
                (CommitKind::Noise, format!("ChangeLog: {word}"))
            }
        };
        let files = state.render();
        let changed: Vec<String> = files
            .keys()
            .chain(previous.keys())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|p| files.get(*p) != previous.get(*p))
            .cloned()
            .collect();
        let ts = epoch + i as i64 * plan.spacing_secs;
        stream.extend_from_slice(format!("commit refs/heads/main\nmark :{}\n", i + 1).as_bytes());
        stream.extend_from_slice(
            format!("author Forge <forge@example.invalid> {ts} +0000\n").as_bytes(),
        );
        stream.extend_from_slice(
            format!("committer Forge <forge@example.invalid> {ts} +0000\n").as_bytes(),
        );
        data(&mut stream, format!("{message}\n").as_bytes());
        if i > 0 {
            stream.extend_from_slice(format!("from :{i}\n").as_bytes());
        }
        stream.extend_from_slice(b"deleteall\n");
        for (path, content) in &files {
            stream.extend_from_slice(format!("M 100644 inline {path}\n").as_bytes());
            data(&mut stream, content.as_bytes());
        }
        stream.push(b'\n');
        commits.push(ForgedCommit {
            index: i,
            id: String::new(),
            kind,
            timestamp: ts,
            files: changed,
        });
        previous = files;
    }
    for i in 0..plan.history_length {
        stream.extend_from_slice(format!("reset refs/tags/t{i}\nfrom :{}\n\n", i + 1).as_bytes());
    }

    std::fs::create_dir_all(&repo)?;
    git(&repo, &["init", "-q", "--initial-branch=main"], None)?;
    git(
        &repo,
        &["fast-import", "--quiet", "--done"],
        Some(&[stream.as_slice(), b"done\n"].concat()),
    )?;
    git(&repo, &["reset", "-q", "--hard", "main"], None)?;
    for c in &mut commits {
        c.id = git(
            &repo,
            &["rev-parse", &format!("t{}^{{commit}}", c.index)],
            None,
        )?
        .trim()
        .to_string();
    }

    let mut tags: BTreeMap<String, String> = commits
        .iter()
        .map(|c| (format!("t{}", c.index), c.id.clone()))
        .collect();
    let last_fix = plan.last_fix();
    let named = [
        ("vulnerable", 1),
        ("fix", last_fix),
        ("reference", last_fix),
        ("intermediary", (last_fix + plan.tip()) / 2),
        ("latest", plan.tip()),
    ];
    for (name, i) in named {
        git(&repo, &["tag", name, &commits[i].id], None)?;
        tags.insert(name.to_string(), commits[i].id.clone());
    }

    let mut breakers = Vec::new();
    for b in &plan.breakers {
        let id = &commits[b.position].id;
        let raw = git(
            &repo,
            &["diff", "--no-renames", "-U3", &format!("{id}^"), id],
            None,
        )?;
        let mut hunks: BTreeMap<String, usize> = BTreeMap::new();
        let mut file = String::new();
        for line in raw.lines() {
            if let Some(rest) = line.strip_prefix("diff --git ") {
                file = rest.to_string();
                hunks.entry(file.clone()).or_default();
            } else if line.starts_with("@@ ") {
                *hunks.entry(file.clone()).or_default() += 1;
            }
        }
        breakers.push(ForgedBreaker {
            position: b.position,
            archetype: b.archetype,
            category: b.archetype.category(),
            commit: id.clone(),
            files_touched: hunks.len(),
            max_hunks_per_file: hunks.values().copied().max().unwrap_or(0),
        });
    }

    let poc_input = dest.join("poc.bin");
    std::fs::write(&poc_input, poc_bytes(plan.poc_behavior))?;
    let mut recipe = BuildRecipe::new(vec![format!(
        "make -s CC={compiler} CFLAGS='-g -O0 -fsanitize=address -fno-omit-frame-pointer'"
    )]);
    recipe.sanitizer = Sanitizer::AddressSanitizer;
    recipe.timeout = 300.0;
    recipe.cache_inputs = Some(vec!["Makefile".into(), "src".into(), "tools".into()]);
    let mut poc = PocSpec::new(
        "{binary} {input}",
        "rdtool",
        &poc_input,
        "heap-buffer-overflow",
    );
    poc.run_timeout = 10.0;
    if plan.poc_behavior == PocBehavior::Hang {
        poc.expected_detector = HANG_CLASS.into();
        poc.hang_is_trigger = true;
        poc.run_timeout = 2.0;
    }

    let fix_commits: Vec<String> = (plan.fix_index..=last_fix)
        .map(|i| commits[i].id.clone())
        .collect();
    let mut ledger = FixtureLedger {
        plan: plan.clone(),
        cve_id: format!("FORGE-{}", plan.seed),
        repo,
        poc_input,
        compiler,
        tags,
        pre_fix: commits[plan.fix_index - 1].id.clone(),
        commits,
        breakers,
        fix_commits,
        tracked_files: vec!["src/record.c".into()],
        recipe,
        poc,
        expected: ExpectedOutcome::default(),
    };
    ledger.expected = expected_outcome(&ledger, &Scenario::default());
    std::fs::write(
        dest.join("ledger.json"),
        serde_json::to_vec_pretty(&ledger).expect("serializable"),
    )?;
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub limits: Limits,
    pub granularity: Granularity,
    /// Commit position to revive at; the tip when unset.
    pub target: Option<usize>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            limits: Limits::default(),
            granularity: Granularity::PatchHunks,
            target: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    pub tiers: BTreeMap<String, VerdictKind>,
    /// `None` when reviving must fail its precondition.
    pub final_state: Option<FinalState>,
    /// Commit ids, newest first.
    pub stack: Vec<String>,
    /// Commit ids in the order they are found.
    pub breaking_commits: Vec<String>,
}

/// What the porter must report for `ledger` under `scenario`, derived from the
/// plan alone.
pub fn expected_outcome(ledger: &FixtureLedger, scenario: &Scenario) -> ExpectedOutcome {
    let plan = &ledger.plan;
    let effective: Vec<&ForgedBreaker> = ledger
        .breakers
        .iter()
        .filter(|b| {
            !(scenario.granularity == Granularity::WholeFiles && b.archetype.undone_by_whole_file())
        })
        .collect();
    let verdict_at = |c: usize, reverted: &[usize]| -> VerdictKind {
        let active: Vec<Archetype> = effective
            .iter()
            .filter(|b| b.position <= c && !reverted.contains(&b.position))
            .map(|b| b.archetype)
            .collect();
        if active.iter().any(|a| a.blocks_patch()) || plan.unbuildable.contains(&c) {
            VerdictKind::BuildFailed
        } else if active.contains(&Archetype::RemoveTool) {
            VerdictKind::PocIncompatible
        } else if !active.is_empty() || plan.poc_behavior == PocBehavior::Clean {
            VerdictKind::NotTriggered
        } else {
            VerdictKind::Triggered
        }
    };
    let tiers = TIERS
        .iter()
        .map(|t| {
            (
                t.to_string(),
                verdict_at(ledger.tier_index(t).expect("tier tag"), &[]),
            )
        })
        .collect();
    let mut out = ExpectedOutcome {
        tiers,
        ..ExpectedOutcome::default()
    };
    if plan.poc_behavior == PocBehavior::Clean {
        return out;
    }
    let target = scenario.target.unwrap_or(plan.tip());
    let limits = &scenario.limits;
    let mut reverted: Vec<usize> = Vec::new();
    let final_state = loop {
        let next = effective
            .iter()
            .find(|b| b.position <= target && !reverted.contains(&b.position));
        let Some(b) = next else {
            break if reverted.is_empty() {
                FinalState::TriviallyRevived
            } else {
                FinalState::Revived
            };
        };
        if reverted.len() == limits.max_reverted_commits {
            break FinalState::Aborted(AbortReason::Complexity);
        }
        out.breaking_commits.push(b.commit.clone());
        if b.files_touched > limits.max_files_per_commit {
            break FinalState::Aborted(AbortReason::TooManyFiles);
        }
        if b.max_hunks_per_file > limits.max_chunks_per_file {
            break FinalState::Aborted(AbortReason::TooManyChunks);
        }
        // the breaker is the only active one at its own commit
        if b.category == Category::C3
            && verdict_at(b.position, &reverted) == VerdictKind::PocIncompatible
        {
            break FinalState::Aborted(AbortReason::FunctionalityRemoved);
        }
        reverted.push(b.position);
    };
    out.final_state = Some(final_state);
    out.stack = reverted
        .iter()
        .rev()
        .map(|&p| ledger.commits[p].id.clone())
        .collect();
    out
}
