use std::io::Write;
use std::path::Path;

use nalgebra::Unit;
use proptest::prelude::*;
use see_core::sim::bvh::triangle_hit;
use see_core::sim::experiment::{run_experiment, ExperimentConfig};
use see_core::sim::{coverage, load_mesh, Bvh, Scene, SceneMesh, SimSensor};
use see_core::{Aabb, Error, Point, SensorIntrinsics, Vector, View};

fn small_sensor(sigma: f64) -> SimSensor {
    let k = SensorIntrinsics {
        width_px: 64,
        height_px: 48,
        fov_x_deg: 70.0,
        fov_y_deg: 43.0,
    };
    SimSensor::new(k, sigma, 11).unwrap()
}

fn brute_hit(mesh: &SceneMesh, o: &Point, d: &Vector) -> Option<f64> {
    (0..mesh.triangles().len())
        .filter_map(|i| triangle_hit(&mesh.triangle(i), o, d))
        .filter(|&t| t > 1e-9)
        .min_by(f64::total_cmp)
}

fn point() -> impl Strategy<Value = Point> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Point::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bvh_agrees_with_brute_force(
        tris in prop::collection::vec((point(), point(), point()), 1..80),
        rays in prop::collection::vec((point(), point()), 1..40),
    ) {
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for (a, b, c) in tris {
            let k = verts.len() as u32;
            verts.extend([a, b, c]);
            faces.push([k, k + 1, k + 2]);
        }
        let Ok(mesh) = SceneMesh::new(verts, faces) else { return Ok(()) };
        let bvh = Bvh::build(&mesh);
        for (o, target) in rays {
            let Some(d) = Unit::try_new(target - o, 1e-9) else { continue };
            let got = bvh.intersect(&(o * 2.0), &d, 1e-9, f64::INFINITY).map(|h| h.t);
            let want = brute_hit(&mesh, &(o * 2.0), &d);
            match (got, want) {
                (Some(g), Some(w)) => prop_assert!((g - w).abs() < 1e-9, "{g} vs {w}"),
                (None, None) => {}
                other => prop_assert!(false, "bvh {:?} brute {:?}", other.0, other.1),
            }
        }
    }

    #[test]
    fn box_hits_match_slab_distance(o in point(), target in point()) {
        let b = Aabb::new(Point::new(-0.2, -0.3, -0.1), Point::new(0.25, 0.1, 0.3));
        let bvh = Bvh::build(&SceneMesh::cuboid(&b));
        let o = o * 3.0;
        prop_assume!(!b.inflate(1e-3).contains(&o));
        let inner = Point::from(b.center().coords + 0.9 * (target.coords.component_mul(&(0.5 * b.extent()))));
        let d = Unit::new_normalize(inner - o);
        let mut lo = f64::NEG_INFINITY;
        for k in 0..3 {
            let (a, c) = ((b.min[k] - o[k]) / d[k], (b.max[k] - o[k]) / d[k]);
            lo = lo.max(a.min(c));
        }
        let hit = bvh.intersect(&o, &d, 1e-9, f64::INFINITY).expect("ray aims inside the box");
        prop_assert!((hit.t - lo).abs() < 1e-6, "{} vs {}", hit.t, lo);
    }
}

#[test]
fn sphere_hits_land_on_front_face_centroids() {
    let c = Point::new(0.1, -0.2, 0.3);
    let mesh = SceneMesh::icosphere(c, 0.3, 3);
    let bvh = Bvh::build(&mesh);
    let eye = c + Vector::new(0.7, 0.4, 0.5);
    let mut checked = 0;
    for i in 0..mesh.triangles().len() {
        let [a, b, q] = mesh.triangle(i);
        let normal = (b - a).cross(&(q - a)).normalize();
        let centroid = Point::from((a.coords + b.coords + q.coords) / 3.0);
        if normal.dot(&(eye - centroid).normalize()) <= 1e-3 {
            continue;
        }
        let d = Unit::new_normalize(centroid - eye);
        let hit = bvh.intersect(&eye, &d, 1e-9, f64::INFINITY).unwrap();
        assert!((hit.t - (centroid - eye).norm()).abs() < 1e-9);
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn noiseless_plane_capture_hits_every_pixel() {
    let scene = Scene::new(SceneMesh::cuboid(&Aabb::new(
        Point::new(-20.0, -20.0, -1.0),
        Point::new(20.0, 20.0, 0.0),
    )));
    let sensor = small_sensor(0.0);
    let pts = sensor.capture(&scene, &View::new(Point::new(0.0, 0.0, 0.5), -Vector::z_axis()), 0);
    assert_eq!(pts.len(), 64 * 48);
    assert!(pts.iter().all(|p| p.z.abs() < 1e-9));
}

#[test]
fn looking_away_sees_nothing() {
    let scene = Scene::new(SceneMesh::icosphere(Point::origin(), 0.3, 2));
    let view = View::new(Point::new(0.0, 0.0, 1.0), Vector::z_axis());
    assert!(small_sensor(0.01).capture(&scene, &view, 0).is_empty());
}

#[test]
fn captures_are_reproducible_per_seed_and_index() {
    let scene = Scene::new(SceneMesh::icosphere(Point::origin(), 0.3, 3));
    let view = View::new(Point::new(0.0, 0.0, 1.0), -Vector::z_axis());
    let s = small_sensor(0.01);
    let a = s.capture(&scene, &view, 0);
    assert!(!a.is_empty());
    assert_eq!(a, s.capture(&scene, &view, 0));
    assert_ne!(a, s.capture(&scene, &view, 1));
    let other = SimSensor { seed: 12, ..s };
    assert_ne!(a, other.capture(&scene, &view, 0));
}

#[test]
fn pixel_rays_span_the_field_of_view() {
    let s = small_sensor(0.0);
    let view = View::new(Point::origin(), Vector::x_axis());
    let half_pixel = 0.5 * 70.0 / 64.0;
    for row in [0, 24, 47] {
        let left = s.pixel_ray(&view, 0, row);
        let right = s.pixel_ray(&view, 63, row);
        let yaw = |r: &Vector| r.y.atan2(r.x).to_degrees().abs();
        assert!((yaw(&left) - (35.0 - half_pixel)).abs() < 1e-9);
        assert!((yaw(&right) - (35.0 - half_pixel)).abs() < 1e-9);
        assert!(left.y * right.y < 0.0);
    }
    let top = s.pixel_ray(&view, 32, 0);
    assert!(top.z > 0.0);
    let pitch = top.z.atan2(top.x).to_degrees();
    assert!((pitch - (21.5 - 0.5 * 43.0 / 48.0)).abs() < 1e-9, "{pitch}");
}

fn write_file(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
    p
}

#[test]
fn unit_cube_loads_from_ply_and_obj() {
    let dir = tempfile::tempdir().unwrap();
    let cube = SceneMesh::cuboid(&Aabb::new(Point::origin(), Point::new(1.0, 1.0, 1.0)));
    let ply = dir.path().join("cube.ply");
    cube.write_ply(std::fs::File::create(&ply).unwrap()).unwrap();
    let m = load_mesh(&ply).unwrap();
    assert_eq!((m.vertices().len(), m.triangles().len()), (8, 12));

    let mut obj = String::new();
    for v in cube.vertices() {
        obj += &format!("v {} {} {}\n", v.x, v.y, v.z);
    }
    for q in [[1, 3, 4, 2], [5, 6, 8, 7], [1, 2, 6, 5], [3, 7, 8, 4], [1, 5, 7, 3], [2, 4, 8, 6]] {
        obj += &format!("f {} {} {} {}\n", q[0], q[1], q[2], q[3]);
    }
    let m = load_mesh(&write_file(dir.path(), "cube.obj", &obj)).unwrap();
    assert_eq!((m.vertices().len(), m.triangles().len()), (8, 12));
}

#[test]
fn corrupt_mesh_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(dir.path(), "bad.ply", "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nend_header\n0\n");
    assert!(matches!(load_mesh(&p), Err(Error::MeshLoad { .. })));
    let p = write_file(dir.path(), "bad.stl", "solid");
    assert!(matches!(load_mesh(&p), Err(Error::MeshLoad { .. })));
}

#[test]
fn coverage_of_half_the_vertices() {
    let mesh = SceneMesh::icosphere(Point::origin(), 0.3, 2);
    let v = mesh.vertices();
    let mut sorted: Vec<Point> = v.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let half = &sorted[..v.len() / 2];
    assert_eq!(coverage(v, half, 1e-4), 0.5);
    assert_eq!(coverage(v, v, 1e-4), 1.0);
    assert_eq!(coverage(v, &[], 1e-4), 0.0);
}

#[test]
fn config_without_mesh_is_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let err = ExperimentConfig::from_toml("[scene]\nscale_to_box = [0.8, 0.8, 0.6]\n", dir.path()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = ExperimentConfig::from_toml("[scene]\nbuiltin = \"sphere\"\nsurprise = 1\n", dir.path()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = ExperimentConfig::from_toml(
        "[scene]\nbuiltin = \"sphere\"\n[params]\npreset = \"small\"\ntau = 50\n[caps]\nmax_views = 3\n",
        Path::new("."),
    )
    .unwrap();
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), Path::new(".")).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.caps().max_views, 3);
}

#[test]
fn short_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut cfg = ExperimentConfig::load(&root.join("configs/bunny.toml")).unwrap();
    cfg.caps.max_views = Some(2);
    let out = dir.path().join("out");
    let summary = run_experiment(&cfg, &out, &[5]).unwrap();
    assert_eq!(summary.trials.len(), 1);
    assert_eq!(summary.trials[0].views.len(), 2);
    for f in [
        "views.csv",
        "metrics.csv",
        "trials.csv",
        "summary.csv",
        "cloud_trial5.ply",
        "events_trial5.jsonl",
        "scene.ply",
        "resolved_config.toml",
        "coverage_vs_distance.svg",
        "coverage_vs_time.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let views = std::fs::read_to_string(out.join("views.csv")).unwrap();
    assert!(views.starts_with(
        "trial,view_index,x,y,z,coverage,cum_distance_m,nbv_time_s,points_total,frontiers\n"
    ));
    assert_eq!(views.lines().count(), 3);
    let events = std::fs::read_to_string(out.join("events_trial5.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(events.lines().next().unwrap()).unwrap();
    assert_eq!(first["outcome"], "initial");
    let resolved = ExperimentConfig::load(&out.join("resolved_config.toml"));
    assert!(resolved.is_ok(), "{resolved:?}");
}
