//! Column schemas of every persisted file kind.

use std::sync::Arc;

use super::{CsvRecord, FieldError, Row};
use crate::stack::{PublisherRecord, SampleRecord, TraceEvent};

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CsvRecord for SampleRecord {
    const KIND: &'static str = "samples";
    const COLUMNS: &'static [&'static str] = &[
        "run_id",
        "topic_id",
        "publisher_node",
        "subscriber_node",
        "seq",
        "publish_ts_ns",
        "receive_ts_ns",
        "latency_ns",
        "status",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.topic_id.to_string(),
            self.publisher_node.to_string(),
            self.subscriber_node.to_string(),
            self.seq.to_string(),
            self.publish_ts_ns.to_string(),
            opt(self.receive_ts_ns),
            opt(self.latency_ns),
            self.status.to_string(),
        ]
    }

    fn parse(row: &mut Row<'_>) -> Result<Self, FieldError> {
        Ok(SampleRecord {
            run_id: row.run_id(0),
            topic_id: row.int(1)?,
            publisher_node: row.int(2)?,
            subscriber_node: row.int(3)?,
            seq: row.int(4)?,
            publish_ts_ns: row.int(5)?,
            receive_ts_ns: row.opt_int(6)?,
            latency_ns: row.opt_int(7)?,
            status: row.token(8)?,
        })
    }
}

impl CsvRecord for PublisherRecord {
    const KIND: &'static str = "publishers";
    const COLUMNS: &'static [&'static str] = &[
        "run_id",
        "topic_id",
        "publisher_node",
        "seq",
        "scheduled_ns",
        "publish_ts_ns",
        "send_status",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.topic_id.to_string(),
            self.publisher_node.to_string(),
            self.seq.to_string(),
            self.scheduled_ns.to_string(),
            opt(self.publish_ts_ns),
            self.status.to_string(),
        ]
    }

    fn parse(row: &mut Row<'_>) -> Result<Self, FieldError> {
        Ok(PublisherRecord {
            run_id: row.run_id(0),
            topic_id: row.int(1)?,
            publisher_node: row.int(2)?,
            seq: row.int(3)?,
            scheduled_ns: row.int(4)?,
            publish_ts_ns: row.opt_int(5)?,
            status: row.token(6)?,
        })
    }
}

impl CsvRecord for TraceEvent {
    const KIND: &'static str = "traces";
    const COLUMNS: &'static [&'static str] =
        &["run_id", "node_id", "topic_id", "seq", "stage", "ts_ns"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.node_id.to_string(),
            self.topic_id.to_string(),
            self.seq.to_string(),
            self.stage.to_string(),
            self.ts_ns.to_string(),
        ]
    }

    fn parse(row: &mut Row<'_>) -> Result<Self, FieldError> {
        Ok(TraceEvent {
            run_id: row.run_id(0),
            node_id: row.int(1)?,
            topic_id: row.int(2)?,
            seq: row.int(3)?,
            stage: row.token(4)?,
            ts_ns: row.int(5)?,
        })
    }
}

/// One statistic of one run. `value` holds integer nanoseconds, a count, a
/// percentage, or a share, already formatted; empty when undefined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub run_id: Arc<str>,
    pub metric: String,
    pub group: String,
    pub value: String,
}

impl CsvRecord for ReportRow {
    const KIND: &'static str = "report";
    const COLUMNS: &'static [&'static str] = &["run_id", "metric", "group", "value_ns_or_pct"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.metric.clone(),
            self.group.clone(),
            self.value.clone(),
        ]
    }

    fn parse(row: &mut Row<'_>) -> Result<Self, FieldError> {
        Ok(ReportRow {
            run_id: row.run_id(0),
            metric: row.text(1).to_string(),
            group: row.text(2).to_string(),
            value: row.text(3).to_string(),
        })
    }
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRow {
    pub run_id: String,
    /// `ok` or `failed`.
    pub status: String,
    pub config_hash: String,
}

impl CsvRecord for IndexRow {
    const KIND: &'static str = "index";
    const COLUMNS: &'static [&'static str] = &["run_id", "status", "config_hash"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.status.clone(),
            self.config_hash.clone(),
        ]
    }

    fn parse(row: &mut Row<'_>) -> Result<Self, FieldError> {
        let status = row.text(1);
        if status != "ok" && status != "failed" {
            return Err(FieldError {
                column: 1,
                reason: format!("unknown run status {status:?}"),
            });
        }
        Ok(IndexRow {
            run_id: row.text(0).to_string(),
            status: status.to_string(),
            config_hash: row.text(2).to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{read_records, write_records, ReportError};
    use super::*;
    use crate::stack::{DeliveryStatus, SendStatus, Stage};
    use proptest::prelude::*;

    fn roundtrip<T: CsvRecord + Clone + PartialEq + std::fmt::Debug>(records: &[T]) -> Vec<T> {
        let mut buf = Vec::new();
        write_records(&mut buf, records).unwrap();
        read_records(&buf[..], "mem").unwrap()
    }

    fn sample(seq: u32, status: DeliveryStatus) -> SampleRecord {
        let lost = status == DeliveryStatus::Lost;
        SampleRecord {
            run_id: Arc::from("r,1"),
            topic_id: 0,
            publisher_node: 0,
            subscriber_node: 1,
            seq,
            publish_ts_ns: 1_000 + seq as u64,
            receive_ts_ns: (!lost).then_some(2_000),
            latency_ns: (!lost).then_some(1_000 - seq as u64),
            status,
        }
    }

    #[test]
    fn three_record_fixture_roundtrips() {
        let records = vec![
            sample(0, DeliveryStatus::InTime),
            sample(1, DeliveryStatus::Late),
            sample(2, DeliveryStatus::Lost),
        ];
        assert_eq!(roundtrip(&records), records);
    }

    #[test]
    fn empty_list_is_header_only() {
        let mut buf = Vec::new();
        write_records::<SampleRecord, _>(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# pubbench samples v1\nrun_id,topic_id,publisher_node,subscriber_node,seq,publish_ts_ns,receive_ts_ns,latency_ns,status\n"
        );
    }

    #[test]
    fn corrupted_status_names_row() {
        let mut buf = Vec::new();
        write_records(
            &mut buf,
            &[
                sample(0, DeliveryStatus::InTime),
                sample(1, DeliveryStatus::Late),
            ],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",LATE", ",LAET");
        let err = read_records::<SampleRecord, _>(text.as_bytes(), "s.csv").unwrap_err();
        match &err {
            ReportError::Field { row, column, .. } => {
                assert_eq!(*row, 2);
                assert_eq!(*column, "status");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn rejects_wrong_header_and_version() {
        let text = "# pubbench samples v2\nrun_id\n";
        assert!(matches!(
            read_records::<SampleRecord, _>(text.as_bytes(), "x"),
            Err(ReportError::Version { .. })
        ));
        let text = "# pubbench traces v1\nrun_id,node_id,topic_id,seq,ts_ns\n";
        assert!(matches!(
            read_records::<TraceEvent, _>(text.as_bytes(), "x"),
            Err(ReportError::Header { .. })
        ));
        let text = "# pubbench publishers v1\nrun_id,topic_id,publisher_node,seq,scheduled_ns,publish_ts_ns,send_status\nr,0,0,1,-5,,UNSENT\n";
        assert!(matches!(
            read_records::<PublisherRecord, _>(text.as_bytes(), "x"),
            Err(ReportError::Field {
                row: 1,
                column: "scheduled_ns",
                ..
            })
        ));
    }

    #[test]
    fn index_and_report_roundtrip() {
        let idx = vec![
            IndexRow {
                run_id: "a".into(),
                status: "ok".into(),
                config_hash: "00ff".into(),
            },
            IndexRow {
                run_id: "b".into(),
                status: "failed".into(),
                config_hash: "11ee".into(),
            },
        ];
        assert_eq!(roundtrip(&idx), idx);
        let rows = vec![ReportRow {
            run_id: Arc::from("a"),
            metric: "loss_pct".into(),
            group: "pair:0-1".into(),
            value: String::new(),
        }];
        assert_eq!(roundtrip(&rows), rows);
    }

    fn delivery_status() -> impl Strategy<Value = DeliveryStatus> {
        prop_oneof![
            Just(DeliveryStatus::InTime),
            Just(DeliveryStatus::Late),
            Just(DeliveryStatus::Lost)
        ]
    }

    fn send_status() -> impl Strategy<Value = SendStatus> {
        prop_oneof![
            Just(SendStatus::SentInTime),
            Just(SendStatus::SentLate),
            Just(SendStatus::Unsent)
        ]
    }

    proptest! {
        #[test]
        fn samples_roundtrip(rows in proptest::collection::vec(
            (any::<u16>(), any::<u16>(), any::<u16>(), any::<u32>(), any::<u64>(),
             proptest::option::of(any::<u64>()), proptest::option::of(any::<u64>()), delivery_status()),
            0..20))
        {
            let records: Vec<SampleRecord> = rows.into_iter().map(|(t, p, s, seq, pts, rts, lat, status)| SampleRecord {
                run_id: Arc::from("run \"q\""),
                topic_id: t, publisher_node: p, subscriber_node: s, seq,
                publish_ts_ns: pts, receive_ts_ns: rts, latency_ns: lat, status,
            }).collect();
            prop_assert_eq!(roundtrip(&records), records);
        }

        #[test]
        fn publishers_roundtrip(rows in proptest::collection::vec(
            (any::<u16>(), any::<u16>(), any::<u32>(), any::<u64>(), proptest::option::of(any::<u64>()), send_status()),
            0..20))
        {
            let records: Vec<PublisherRecord> = rows.into_iter().map(|(t, p, seq, sch, pts, status)| PublisherRecord {
                run_id: Arc::from("r"),
                topic_id: t, publisher_node: p, seq, scheduled_ns: sch, publish_ts_ns: pts, status,
            }).collect();
            prop_assert_eq!(roundtrip(&records), records);
        }

        #[test]
        fn traces_roundtrip(rows in proptest::collection::vec(
            (any::<u16>(), any::<u16>(), any::<u32>(), 0usize..11, any::<u64>()), 0..20))
        {
            let records: Vec<TraceEvent> = rows.into_iter().map(|(n, t, seq, st, ts)| TraceEvent {
                run_id: Arc::from("r"),
                node_id: n, topic_id: t, seq, stage: Stage::ALL[st], ts_ns: ts,
            }).collect();
            prop_assert_eq!(roundtrip(&records), records);
        }
    }
}
