use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;

use s2c_core::codec::{decode, encode, CodecConfig, CodecModels};
use s2c_core::eval::{read_ply, write_ply};
use s2c_core::geometry::{morton_key, Coord, PointCloud};
use s2c_core::grc::{ResidualModel, RpaNet, RpaNetConfig};
use s2c_core::sparse::{build_kernel_map, sparse_conv, ConvSpec, SparseTensor};
use s2c_core::stagewise::{OccupancyModel, StageNet, StageNetConfig, StageState};

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    (1u8..=8).prop_flat_map(|depth| {
        let max = 1u32 << depth;
        prop::collection::vec(prop::array::uniform3(0..max), 1..400)
            .prop_map(move |pts| PointCloud::new(pts, depth).unwrap())
    })
}

fn sorted_coords(raw: Vec<Coord>) -> Arc<[Coord]> {
    let mut v = raw;
    v.sort_unstable_by_key(|c| morton_key(*c));
    v.dedup();
    v.into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lossless_streams_invert_exactly(pc in cloud_strategy(), start in prop::option::of(1u8..=8)) {
        let mut cfg = CodecConfig::lossless(pc.bit_depth());
        cfg.grc_start_level = start.map(|s| s.min(pc.bit_depth()));
        let models = CodecModels::default();
        let enc = encode(&pc, &cfg, &models, false).unwrap();
        let dec = decode(&enc.bytes, &models, false).unwrap();
        prop_assert_eq!(&dec.cloud, &pc);

        let r = &enc.report;
        let framed: usize = r.payload_bytes.iter().map(|p| p + 12).sum();
        prop_assert_eq!(r.header_bytes + framed, enc.bytes.len());
        let level_bits: u64 = r.levels.iter().map(|l| l.total()).sum();
        prop_assert_eq!(level_bits, 8 * r.payload_bytes.iter().sum::<usize>() as u64);
        prop_assert_eq!(dec.report.levels.clone(), r.levels.clone());
    }

    #[test]
    fn kernel_maps_pair_each_voxel_once_per_offset(
        raw in prop::collection::vec(prop::array::uniform3(0u32..6), 1..60),
        k in prop::sample::select(vec![1usize, 3, 5]),
        d in 1u32..3,
    ) {
        let coords = sorted_coords(raw);
        let map = build_kernel_map(&coords, &coords, k, d).unwrap();
        for list in &map.pairs {
            let mut outs: Vec<u32> = list.iter().map(|p| p.1).collect();
            outs.sort_unstable();
            outs.dedup();
            prop_assert_eq!(outs.len(), list.len());
            prop_assert!(list.iter().all(|&(i, j)| (i as usize) < coords.len() && (j as usize) < coords.len()));
        }
        // the centre offset is the identity
        let centre = &map.pairs[map.volume() / 2];
        prop_assert!(centre.iter().enumerate().all(|(n, &(i, j))| i as usize == n && j as usize == n));
    }

    #[test]
    fn pointwise_conv_is_a_row_matmul(
        raw in prop::collection::vec(prop::array::uniform3(0u32..8), 1..40),
        w in prop::collection::vec(-1.0f64..1.0, 6),
        x in prop::collection::vec(-1.0f64..1.0, 80),
    ) {
        let coords = sorted_coords(raw);
        let n = coords.len();
        let feats = Array2::from_shape_fn((n, 2), |(r, c)| x[(2 * r + c) % x.len()]);
        let mut spec = ConvSpec::<f64>::zeros(1, 1, 2, 3);
        spec.weights.copy_from_slice(&w);
        let t = SparseTensor::new(coords.clone(), feats.clone()).unwrap();
        let out = sparse_conv(&t, &spec, &build_kernel_map(&coords, &coords, 1, 1).unwrap()).unwrap();
        let wm = Array2::from_shape_vec((2, 3), w).unwrap();
        let expected = feats.dot(&wm);
        for (a, b) in out.features().iter().zip(expected.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(out.coords(), &coords);
    }

    #[test]
    fn stage_state_channels_track_decoded_stages(
        occ in prop::collection::vec(1u8..=255, 1..30),
        upto in 0usize..=8,
    ) {
        let coords: Arc<[Coord]> = (0..occ.len() as u32).map(|i| [i, 0, 0]).collect::<Vec<_>>().into();
        let mut state = StageState::<f32>::new(coords.clone());
        for stage in 0..upto {
            let bits: Vec<bool> = occ.iter().map(|&o| o >> stage & 1 == 1).collect();
            state.update(&bits).unwrap();
        }
        prop_assert_eq!(state.stage(), upto);
        prop_assert_eq!(state.coords(), &coords);
        let f = state.tensor().features();
        for (r, &o) in occ.iter().enumerate() {
            for k in 0..8 {
                let v = f[[r, k]];
                if k < upto {
                    prop_assert_eq!(v, if o >> k & 1 == 1 { 1.0 } else { -1.0 });
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
        prop_assert_eq!(&StageState::teacher_forced(coords, &occ, upto), &state);
    }

    #[test]
    fn ply_binary_round_trip(pts in prop::collection::vec(prop::array::uniform3(-1.0e4f32..1.0e4), 0..200)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        let pts: Vec<[f64; 3]> = pts.iter().map(|p| p.map(f64::from)).collect();
        write_ply(&path, &pts).unwrap();
        prop_assert_eq!(read_ply(&path).unwrap(), pts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn encoder_and_decoder_see_identical_probabilities(pc in cloud_strategy(), seed in 0u64..1000) {
        prop_assume!(pc.bit_depth() >= 4);
        let models = CodecModels {
            occupancy: OccupancyModel::Network(Box::new(
                StageNet::new(StageNetConfig { channels: 4, kernel_size: 3, share_head: false }, seed).unwrap(),
            )),
            residual: ResidualModel::Network(Box::new(
                RpaNet::new(RpaNetConfig { channels: 4, kernel_size: 3, history: 2 }, seed).unwrap(),
            )),
        };
        let mut cfg = CodecConfig::lossless(pc.bit_depth());
        cfg.grc_start_level = Some(pc.bit_depth() - 2);
        let enc = encode(&pc, &cfg, &models, true).unwrap();
        let dec = decode(&enc.bytes, &models, true).unwrap();
        prop_assert_eq!(&dec.cloud, &pc);
        prop_assert_eq!(dec.report.trace, enc.report.trace);
    }
}
