//! Training data in CSV form:
//! `query_id,doc_id,protected,<feature...>,judgment`, one row per document,
//! rows of a query contiguous.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{FeatureVector, QueryDocs, PROTECTED_FEATURE};

/// Queries plus the names of the non-protected feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<S> {
    pub feature_names: Vec<String>,
    pub queries: Vec<QueryDocs<S>>,
}

impl<S: Scalar> TrainingSet<S> {
    /// Model input names: the protected indicator followed by the features.
    pub fn model_feature_names(&self) -> Vec<String> {
        std::iter::once(PROTECTED_FEATURE.to_string())
            .chain(self.feature_names.iter().cloned())
            .collect()
    }
}

fn parse_number<S: Scalar>(raw: &str, line: usize, column: &str) -> Result<S> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("column `{column}`: `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("column `{column}` must be finite")));
    }
    Ok(S::of(v))
}

/// Query id, line of its first row, documents and judgments.
type PendingQuery<S> = (String, usize, Vec<FeatureVector<S>>, Vec<S>);

pub fn read_training_csv<S: Scalar, R: Read>(reader: R) -> Result<TrainingSet<S>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 4
        || cols[0] != "query_id"
        || cols[1] != "doc_id"
        || cols[2] != "protected"
        || cols[cols.len() - 1] != "judgment"
    {
        return Err(Error::parse(
            1,
            "header must be `query_id,doc_id,protected,<features...>,judgment`",
        ));
    }
    let feature_names: Vec<String> = cols[3..cols.len() - 1].iter().map(|s| s.to_string()).collect();

    let mut queries: Vec<QueryDocs<S>> = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut current: Option<PendingQuery<S>> = None;

    let close = |(qid, line, docs, judgments): PendingQuery<S>| {
        QueryDocs::new(qid, docs, judgments).map_err(|e| Error::parse(line, e.to_string()))
    };

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols.len() {
            return Err(Error::parse(line, format!("expected {} fields, found {}", cols.len(), record.len())));
        }
        let qid = record[0].trim().to_string();
        let doc_id = record[1].trim().to_string();
        if qid.is_empty() || doc_id.is_empty() {
            return Err(Error::parse(line, "query_id and doc_id must be non-empty"));
        }
        let protected = match record[2].trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(line, format!("protected must be 0 or 1, got `{other}`"))),
        };
        let features = (3..cols.len() - 1)
            .map(|j| parse_number(&record[j], line, cols[j]))
            .collect::<Result<Vec<S>>>()?;
        let judgment = parse_number(&record[cols.len() - 1], line, "judgment")?;
        let doc = FeatureVector::new(doc_id, protected, features).map_err(|e| Error::parse(line, e.to_string()))?;

        match &mut current {
            Some((cur, _, docs, judgments)) if *cur == qid => {
                docs.push(doc);
                judgments.push(judgment);
            }
            _ => {
                if finished.contains(&qid) {
                    return Err(Error::parse(line, format!("rows of query `{qid}` are not contiguous")));
                }
                if let Some(done) = current.take() {
                    finished.insert(done.0.clone());
                    queries.push(close(done)?);
                }
                current = Some((qid, line, vec![doc], vec![judgment]));
            }
        }
    }
    if let Some(done) = current.take() {
        queries.push(close(done)?);
    }
    if queries.is_empty() {
        return Err(Error::parse(1, "no training rows"));
    }
    Ok(TrainingSet {
        feature_names,
        queries,
    })
}

pub fn write_training_csv<S: Scalar, W: Write>(writer: W, set: &TrainingSet<S>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["query_id".to_string(), "doc_id".to_string(), "protected".to_string()];
    header.extend(set.feature_names.iter().cloned());
    header.push("judgment".to_string());
    wtr.write_record(&header).map_err(csv_io)?;
    for q in &set.queries {
        for (doc, judgment) in q.docs.iter().zip(&q.judgments) {
            let mut row = vec![
                q.query_id.clone(),
                doc.doc_id.clone(),
                if doc.is_protected() { "1" } else { "0" }.to_string(),
            ];
            row.extend(doc.features.iter().map(|v| v.to_string()));
            row.push(judgment.to_string());
            wtr.write_record(&row).map_err(csv_io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "query_id,doc_id,protected,score,age,judgment\n\
                          q1,a,0,0.9,30,1\n\
                          q1,b,1,0.4,41,0\n\
                          q2,c,1,0.8,22,2\n\
                          q2,d,0,0.1,35,1\n";

    #[test]
    fn parses_grouped_queries() {
        let set: TrainingSet<f64> = read_training_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(set.feature_names, ["score", "age"]);
        assert_eq!(set.model_feature_names(), ["protected", "score", "age"]);
        assert_eq!(set.queries.len(), 2);
        assert_eq!(set.queries[1].docs[0].row(), vec![1.0, 0.8, 22.0]);
        assert_eq!(set.queries[1].judgments, vec![2.0, 1.0]);
    }

    #[test]
    fn writes_what_it_reads() {
        let set: TrainingSet<f64> = read_training_csv(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_training_csv(&mut buf, &set).unwrap();
        let again: TrainingSet<f64> = read_training_csv(buf.as_slice()).unwrap();
        assert_eq!(again, set);
    }

    fn parse_err(input: &str) -> (usize, String) {
        match read_training_csv::<f64, _>(input.as_bytes()) {
            Err(Error::Parse { line, message }) => (line, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_contiguous_query_is_rejected() {
        let input = "query_id,doc_id,protected,x,judgment\nq1,a,0,1,1\nq1,b,1,2,0\nq2,c,0,1,1\nq2,d,1,1,0\nq1,e,0,3,1\n";
        let (line, msg) = parse_err(input);
        assert_eq!(line, 6);
        assert!(msg.contains("contiguous"));
    }

    #[test]
    fn bad_values_name_their_line() {
        assert_eq!(parse_err("query_id,doc_id,protected,x,judgment\nq,a,0,1,1\nq,b,2,1,0\n").0, 3);
        assert_eq!(parse_err("query_id,doc_id,protected,x,judgment\nq,a,0,1,1\nq,b,1,abc,0\n").0, 3);
        assert_eq!(parse_err("query_id,doc_id,protected,x,judgment\nq,a,0,1,1\nq,b,1,1,0\nr,c,0,1,1\n").0, 4);
        assert_eq!(parse_err("id,doc,protected,x,judgment\nq,a,0,1,1\n").0, 1);
        assert_eq!(parse_err("query_id,doc_id,protected,x,judgment\n").0, 1);
    }
}
