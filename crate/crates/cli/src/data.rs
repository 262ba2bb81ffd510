//! Long-format CSV: one column per factor plus the response column `y`.

use vcomp::{BalancedDataset, ModelSpec, RawRecord};

use crate::CliError;

pub const RESPONSE: &str = "y";

pub fn parse_dataset(text: &str, spec: &ModelSpec) -> Result<BalancedDataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(invalid)?
        .iter()
        .map(str::to_owned)
        .collect();
    let column = |name: &str| -> Result<usize, CliError> {
        let mut hits = header.iter().enumerate().filter(|(_, h)| *h == name);
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            (Some(_), Some(_)) => Err(CliError::Validation(format!(
                "column {name:?} appears more than once"
            ))),
            (None, _) => Err(CliError::Validation(format!("missing column {name:?}"))),
        }
    };
    let factor_cols = spec
        .factors()
        .iter()
        .map(|f| column(&f.name))
        .collect::<Result<Vec<_>, _>>()?;
    let y_col = column(RESPONSE)?;
    if let Some(extra) = header
        .iter()
        .find(|h| *h != RESPONSE && spec.factor_index(h).is_none())
    {
        return Err(CliError::Validation(format!("unexpected column {extra:?}")));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(invalid)?;
        if row.len() != header.len() {
            // data rows start on line 2
            return Err(CliError::Validation(format!(
                "line {}: expected {} fields, found {}",
                i + 2,
                header.len(),
                row.len()
            )));
        }
        let labels = factor_cols.iter().map(|&c| row[c].to_owned());
        records.push(RawRecord::new(labels, &row[y_col]));
    }
    Ok(BalancedDataset::validate(spec, &records)?)
}

pub fn write_dataset(data: &BalancedDataset) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let spec = data.spec();
    let header = spec
        .factors()
        .iter()
        .map(|f| f.name.as_str())
        .chain([RESPONSE]);
    writer.write_record(header).expect("in-memory write");
    for rec in data.records() {
        writer
            .write_record(
                rec.labels
                    .iter()
                    .map(String::as_str)
                    .chain([rec.response.as_str()]),
            )
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn invalid(e: csv::Error) -> CliError {
    CliError::Validation(format!("malformed csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vcomp::{Design, Factor};

    fn rcbd() -> ModelSpec {
        ModelSpec::new(
            Design::Rcbd,
            vec![Factor::fixed("A", 2), Factor::fixed("B", 2)],
            1,
            None,
        )
        .unwrap()
    }

    #[test]
    fn columns_in_any_order() {
        let text = "y,B,A\n1,b1,a1\n2,b2,a1\n3,b1,a2\n5,b2,a2\n";
        let data = parse_dataset(text, &rcbd()).unwrap();
        assert_eq!(data.values(), &[1.0, 2.0, 3.0, 5.0]);
    }

    #[test]
    fn write_then_parse() {
        let data = BalancedDataset::from_values(&rcbd(), vec![1.0, 2.5, -3.0, 5.0]).unwrap();
        let again = parse_dataset(&write_dataset(&data), &rcbd()).unwrap();
        assert_eq!(again.values(), data.values());
    }

    #[test]
    fn header_problems() {
        let spec = rcbd();
        let err = |t: &str| parse_dataset(t, &spec).unwrap_err().to_string();
        assert!(err("A,y\n1,1\n").contains("missing column \"B\""));
        assert!(err("A,B,y,z\n1,1,1,1\n").contains("unexpected column \"z\""));
        assert!(err("A,B,A,y\n").contains("more than once"));
        assert!(err("A,B,y\n1,1\n").contains("line 2"));
    }
}
