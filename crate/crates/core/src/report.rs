use alloc::string::String;
use core::fmt::Write;

use crate::stats::StatsSummary;

pub const CSV_HEADER: &str = "size_bytes,n,mean_us,std_us,min_us,max_us,p50_us,p99_us";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Csv,
    #[default]
    Table,
}

/// `159.4 ± 163.6` renders as `159 ± 164`; halves round away from zero.
pub fn mean_std_cell(summary: &StatsSummary) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{} ± {}",
        libm::round(summary.mean_us) as i64,
        libm::round(summary.std_us) as i64
    );
    out
}

/// Human label for a byte count: `32KB`, `4MB`, or plain bytes.
pub fn size_label(bytes: usize) -> String {
    const KB: usize = 1024;
    const MB: usize = 1024 * 1024;
    let mut out = String::new();
    let _ = if bytes >= MB && bytes.is_multiple_of(MB) {
        write!(out, "{}MB", bytes / MB)
    } else if bytes >= KB && bytes.is_multiple_of(KB) {
        write!(out, "{}KB", bytes / KB)
    } else {
        write!(out, "{bytes}B")
    };
    out
}

pub fn render_report(summaries: &[StatsSummary], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for s in summaries {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.size_bytes,
                    s.n_effective,
                    s.mean_us,
                    s.std_us,
                    s.min_us,
                    s.max_us,
                    s.p50_us,
                    s.p99_us
                );
            }
        }
        ReportFormat::Table => {
            let _ = writeln!(out, "{:<8} {:>6}  mean ± std (µs)", "size", "n");
            for s in summaries {
                let _ = writeln!(
                    out,
                    "{:<8} {:>6}  {}",
                    size_label(s.size_bytes),
                    s.n_effective,
                    mean_std_cell(s)
                );
            }
        }
    }
    out
}
