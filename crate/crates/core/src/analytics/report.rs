//! CSV tables with header rows. Dates are written as `YYYY-MM-DD`.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;

use super::{RegionTable, VolumeSeries};

/// `region,n_pos,n_neg,rho`; `rho` is empty when undefined.
pub fn write_rho_csv<W: Write>(table: &RegionTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "n_pos", "n_neg", "rho"])?;
    for (region, counts) in table {
        let rho = counts.index.map(|i| i.rho().to_string()).unwrap_or_default();
        w.write_record([region.as_str(), &counts.n_pos.to_string(), &counts.n_neg.to_string(), &rho])?;
    }
    w.flush()?;
    Ok(())
}

/// `key,day,count`.
pub fn write_volume_csv<W: Write>(series: &VolumeSeries, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "day", "count"])?;
    for ((key, day), count) in series {
        w.write_record([key.as_str(), &day.to_string(), &count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `country,day,n_pos,n_neg`.
pub fn write_sentiment_series_csv<W: Write>(
    country: &str,
    series: &BTreeMap<NaiveDate, [usize; 2]>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "day", "n_pos", "n_neg"])?;
    for (day, [pos, neg]) in series {
        w.write_record([country, &day.to_string(), &pos.to_string(), &neg.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `rank,hashtag,variance`, ranks starting at 1.
pub fn write_variance_csv<W: Write>(ranking: &[(String, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "hashtag", "variance"])?;
    for (i, (tag, var)) in ranking.iter().enumerate() {
        w.write_record([&(i + 1).to_string(), tag.as_str(), &var.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
