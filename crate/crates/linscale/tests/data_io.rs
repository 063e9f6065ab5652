use linscale::data::{
    blob_centers, gen_blobs, load_csv, read_csv, write_csv, write_csv_to, BlobSpec,
};
use linscale::Error;
use linscale_core::optimizer::{gd_train, Dataset, TrainConfig};
use linscale_core::rng::SeededRng;

fn spec(seed: u64) -> BlobSpec {
    BlobSpec {
        classes: 4,
        dim: 6,
        samples: 1000,
        separation: 3.0,
        noise: 0.5,
        spread: 1.0,
        seed,
        split: 0.8,
    }
}

#[test]
fn two_row_file_round_trips() {
    let data =
        Dataset::from_rows(&[vec![0.1, -2.5e-7], vec![1.0 / 3.0, 1e300]], vec![1, 0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&path, &data).unwrap();
    assert_eq!(load_csv(&path, false).unwrap(), data);
}

#[test]
fn largest_label_sets_class_count() {
    let data = read_csv("0,1.0\n4,2.0\n2,3.0\n".as_bytes(), false).unwrap();
    assert_eq!(data.classes(), 5);
    assert_eq!(data.dim(), 1);
}

#[test]
fn header_row_is_skipped_and_counted() {
    let data = read_csv("label,x,y\n1, 0.5 ,2\n".as_bytes(), true).unwrap();
    assert_eq!(data.sample(0), &[0.5, 2.0]);
    match read_csv("label,x\n1,oops\n".as_bytes(), true).unwrap_err() {
        Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 2)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn nan_cell_is_a_parse_error_naming_the_cell() {
    let err = read_csv("0,1.0,2.0\n1,3.0,NaN\n".as_bytes(), false).unwrap_err();
    match &err {
        Error::Parse {
            row,
            column,
            message,
        } => {
            assert_eq!((*row, *column), (2, 3));
            assert!(message.contains("NaN"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("row 2, column 3"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn bad_labels_and_ragged_rows_are_rejected() {
    for text in [
        "1.5,2\n",
        "-1,2\n",
        "a,2\n",
        "0,1,2\n1,2\n",
        "inf,1\n",
        "0,inf\n",
        "3\n",
    ] {
        assert!(
            matches!(read_csv(text.as_bytes(), false), Err(Error::Parse { .. })),
            "{text:?}"
        );
    }
}

#[test]
fn empty_file_is_invalid_input() {
    assert!(matches!(
        read_csv("".as_bytes(), false),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        read_csv("label,x\n".as_bytes(), true),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_csv("/nonexistent/linscale.csv", false),
        Err(Error::Io { .. })
    ));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let bytes = |seed| {
        let (train, test) = gen_blobs(&spec(seed)).unwrap();
        let mut out = Vec::new();
        write_csv_to(&mut out, &train).unwrap();
        write_csv_to(&mut out, &test).unwrap();
        out
    };
    assert_eq!(bytes(7), bytes(7));
    assert_ne!(bytes(7), bytes(8));
}

#[test]
fn split_sizes_and_disjointness() {
    let (train, test) = gen_blobs(&spec(1)).unwrap();
    assert_eq!((train.len(), test.len()), (800, 200));
    assert_eq!((train.classes(), test.classes()), (4, 4));
    for i in 0..test.len() {
        assert!((0..train.len()).all(|j| train.sample(j) != test.sample(i)));
    }
    let mut counts = [0usize; 4];
    train
        .labels()
        .iter()
        .chain(test.labels())
        .for_each(|&y| counts[y] += 1);
    assert_eq!(counts, [250; 4]);
}

#[test]
fn centers_are_at_least_the_separation_apart() {
    for (k, d) in [(4, 6), (10, 64), (6, 2), (12, 3)] {
        let s = BlobSpec {
            classes: k,
            dim: d,
            separation: 2.5,
            ..spec(0)
        };
        let centers = blob_centers(&s, &mut SeededRng::new(3));
        let mut closest = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                let dist = centers[a]
                    .iter()
                    .zip(&centers[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                closest = closest.min(dist);
            }
        }
        assert!(closest >= 2.5 * (1.0 - 1e-12), "K={k} d={d}: {closest}");
        assert!(closest <= 2.5 * (1.0 + 1e-12));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = [
        BlobSpec {
            classes: 1,
            ..spec(0)
        },
        BlobSpec {
            samples: 3,
            ..spec(0)
        },
        BlobSpec {
            split: 1.0,
            ..spec(0)
        },
        BlobSpec {
            split: 0.0,
            ..spec(0)
        },
        BlobSpec {
            separation: 0.0,
            ..spec(0)
        },
        BlobSpec {
            noise: -1.0,
            ..spec(0)
        },
        BlobSpec {
            spread: 0.5,
            ..spec(0)
        },
        BlobSpec {
            samples: 4,
            split: 0.01,
            ..spec(0)
        },
    ];
    for s in bad {
        assert!(
            matches!(
                gen_blobs(&s),
                Err(Error::Core(linscale_core::Error::InvalidArgument(_)))
            ),
            "{s:?}"
        );
    }
}

#[test]
fn well_separated_blobs_are_learned_perfectly() {
    let s = BlobSpec {
        separation: 20.0,
        noise: 0.1,
        ..spec(4)
    };
    let (train, test) = gen_blobs(&s).unwrap();
    let out = gd_train(&train, &TrainConfig::new(0.5, 30, 0.0, 0), &test).unwrap();
    assert_eq!(out.train_accuracy, 1.0);
    assert_eq!(out.test_accuracy, 1.0);
}

#[test]
fn spread_scales_coordinates_geometrically() {
    let flat = gen_blobs(&BlobSpec {
        noise: 0.0,
        ..spec(2)
    })
    .unwrap()
    .0;
    let scaled = gen_blobs(&BlobSpec {
        noise: 0.0,
        spread: 100.0,
        ..spec(2)
    })
    .unwrap()
    .0;
    for i in 0..10 {
        for j in 0..6 {
            let expected = flat.sample(i)[j] * 100f64.powf(-(j as f64) / 5.0);
            assert!((scaled.sample(i)[j] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }
}
