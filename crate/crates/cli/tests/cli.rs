use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tasteprint_core::calibration::{fit_resolution_model, read_samples_csv, write_samples_csv, CalibrationSample};
use tasteprint_core::geometry::shapes::{cube, cylinder};
use tasteprint_core::geometry::{Point2, SliceStack};
use tasteprint_core::imaging::{write_ppm, RasterImage};
use tasteprint_core::planner::TasteDesign;

fn tasteprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tasteprint"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(ws.path("cube.stl"), cube(10.0).to_binary_stl()).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn sliced(&self) -> PathBuf {
        let out = self.path("slices.json");
        let o = tasteprint(&["slice", "--mesh", s(&self.path("cube.stl")), "--layer-height", "1.6", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }
}

#[test]
fn version_names_tool_and_schema() {
    let o = tasteprint(&["--version"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "tasteprint 0.1.0 (design schema 1)");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&tasteprint(&["--frobnicate"])), 2);
    assert_eq!(code(&tasteprint(&["slice", "--mesh", "x.stl"])), 2);
    assert_eq!(code(&tasteprint(&["explode"])), 2);
    assert_eq!(code(&tasteprint(&["calibrate", "fit", "--samples", "a.csv", "--model", "quadratic"])), 2);
}

#[test]
fn slice_cube() {
    let ws = Workspace::new();
    let o = tasteprint(&["slice", "--mesh", s(&ws.path("cube.stl")), "--layer-height", "1.6", "--out", s(&ws.path("slices.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("7 layers"), "{}", stdout(&o));
    let stack = SliceStack::from_json(&std::fs::read_to_string(ws.path("slices.json")).unwrap()).unwrap();
    assert_eq!(stack.len(), 7);
    for layer in &stack.layers {
        assert!((layer.area - 100.0).abs() < 1e-9);
    }
}

#[test]
fn io_and_parse_errors_exit_two() {
    let ws = Workspace::new();
    let o = tasteprint(&["slice", "--mesh", s(&ws.path("missing.stl")), "--out", s(&ws.path("o.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.stl"));
    std::fs::write(ws.path("junk.stl"), "solid x\nfacet normal oops\n").unwrap();
    let o = tasteprint(&["slice", "--mesh", s(&ws.path("junk.stl")), "--out", s(&ws.path("o.json"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    std::fs::write(ws.path("bad.json"), "{ not json").unwrap();
    let o = tasteprint(&["plan", "--slices", s(&ws.path("bad.json"))]);
    assert_eq!(code(&o), 2);
    let slices = ws.sliced();
    let o = tasteprint(&["plan", "--slices", s(&slices), "--event", "layer=1,channel=0,x=5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing y"));
}

#[test]
fn planner_rejections_exit_one() {
    let ws = Workspace::new();
    let slices = ws.sliced();
    let out = ws.path("design.json");
    let o = tasteprint(&["plan", "--slices", s(&slices), "--event", "layer=3,channel=1,x=25,y=5,duration=20", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("outside the contour"), "{}", stderr(&o));
    assert!(stderr(&o).contains("error[outside_contour] layer 3"), "{}", stderr(&o));
    assert!(!out.exists());
    let o = tasteprint(&["plan", "--slices", s(&slices), "--allocate", "channel=1,mass=500"]);
    assert_eq!(code(&o), 1);

    // a design made for another mesh
    std::fs::write(ws.path("tall.stl"), cube(12.0).to_binary_stl()).unwrap();
    let other = ws.path("other.json");
    assert_eq!(code(&tasteprint(&["slice", "--mesh", s(&ws.path("tall.stl")), "--out", s(&other)])), 0);
    assert_eq!(code(&tasteprint(&["plan", "--slices", s(&other), "--out", s(&out)])), 0);
    let o = tasteprint(&["gcode", "--slices", s(&slices), "--design", s(&out), "--out", s(&ws.path("x.gcode"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("design was made for mesh"));
}

#[test]
fn pipeline_end_to_end() {
    let ws = Workspace::new();
    let slices = ws.sliced();
    let design = ws.path("design.json");
    let o = tasteprint(&[
        "plan",
        "--slices", s(&slices),
        "--allocate", "channel=1,mass=10,standoff=25",
        "--pattern", "layer=6,channel=0,duration=20,standoff=20,overlap=0.2",
        "--event", "layer=3,channel=2,x=5,y=5,intensity=10",
        "--event", "layer=0,channel=4,x=2.5,y=7.5,duration=15,standoff=30",
        "--out", s(&design),
    ]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let d = TasteDesign::from_json(&std::fs::read_to_string(&design).unwrap()).unwrap();
    assert_eq!(d.version, 1);
    assert_eq!(d.layers[3].events.iter().filter(|e| e.channel == 2).map(|e| e.duration_ms).collect::<Vec<_>>(), vec![80]);
    assert!(d.layers[6].events.iter().filter(|e| e.channel == 0).count() >= 2);

    let gcode = ws.path("food.gcode");
    let o = tasteprint(&["gcode", "--slices", s(&slices), "--design", s(&design), "--profile", "default", "--out", s(&gcode)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&gcode).unwrap();
    assert_eq!(text.matches("M810").count(), d.event_count());
    assert!(stdout(&o).contains(&format!("{} sprays", d.event_count())));

    let o = tasteprint(&["simulate", "--gcode", s(&gcode)]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).ends_with("conservation: all clear\n"), "{}", stdout(&o));

    let maps = ws.path("maps");
    let masses = ws.path("masses.csv");
    let report = ws.path("report.json");
    let o = tasteprint(&[
        "simulate", "--gcode", s(&gcode), "--design", s(&design),
        "--maps", s(&maps), "--masses", s(&masses), "--report", s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(maps.join("layer006_ch0.pgm").exists());
    let csv = std::fs::read_to_string(&masses).unwrap();
    assert!(csv.starts_with("layer,channel,mass_mg\n"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(summary["all_clear"], true);
    assert_eq!(summary["comparison"]["all_clear"], true);
    // channel 1 carries the allocated 10 mg within one millisecond step per event
    let total: f64 = summary["conservation"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["channel"] == 1)
        .map(|r| r["simulated_mg"].as_f64().unwrap())
        .sum();
    assert!((total - 10.0).abs() <= 7.0 * 0.082, "{total}");

    // a design that no longer matches the program is reported
    let mut edited = d.clone();
    edited.layers[0].events[0].duration_ms += 5;
    let edited_path = ws.path("edited.json");
    std::fs::write(&edited_path, edited.to_json()).unwrap();
    let o = tasteprint(&["simulate", "--gcode", s(&gcode), "--design", s(&edited_path)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("conservation: deviations found"));
}

#[test]
fn synchronization_faults_exit_one() {
    let ws = Workspace::new();
    let program = ws.path("bad.gcode");
    std::fs::write(&program, ";LAYER:0\nG0 Z1.6\nG0 X1 Y1 Z21.6\nM810 C0 D20\nG4 P20\nG1 X5 Y1 Z1.6 E0.3\n;END\n").unwrap();
    let o = tasteprint(&["simulate", "--gcode", s(&program)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("violation: layer 0: spray at command 3 precedes extrusion"), "{}", stdout(&o));
    std::fs::write(&program, "G1 X1 Y1 Zq\n").unwrap();
    assert_eq!(code(&tasteprint(&["simulate", "--gcode", s(&program)])), 2);
}

fn resolution_samples() -> Vec<CalibrationSample> {
    let mut out = Vec::new();
    for (i, d) in [20.0f64, 30.0, 40.0].into_iter().enumerate() {
        for t in [20.0f64, 40.0, 60.0] {
            for r in 0..3 {
                let y = -3.525 + 1.450 * d.sqrt() + 0.918 * t.sqrt() + [0.1, -0.05, -0.05][r] * (i as f64 + 1.0);
                out.push(CalibrationSample::diameter(d, t, y, r as u32));
            }
        }
    }
    out
}

#[test]
fn calibrate_fit() {
    let ws = Workspace::new();
    let samples = resolution_samples();
    let csv = ws.path("resolution.csv");
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &samples).unwrap();
    std::fs::write(&csv, buf).unwrap();

    let o = tasteprint(&["calibrate", "fit", "--samples", s(&csv), "--model", "resolution"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let direct = fit_resolution_model(&samples).unwrap();
    assert_eq!(report["r2"].as_f64().unwrap(), direct.r2);
    assert!(stderr(&o).contains(&format!("R² = {:.4}", direct.r2)));

    let fit = ws.path("fit.json");
    let cal = ws.path("cal.json");
    let o = tasteprint(&[
        "calibrate", "fit", "--samples", s(&csv), "--model", "resolution",
        "--out", s(&fit), "--update-calibration", s(&cal),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("27 samples, R² = "));
    let updated: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cal).unwrap()).unwrap();
    assert_eq!(updated["beta1"].as_f64().unwrap(), direct.coefficients[1]);
    assert_eq!(updated["alpha1"].as_f64().unwrap(), 0.082);

    // amount fit over a table with no mass column
    let o = tasteprint(&["calibrate", "fit", "--samples", s(&csv), "--model", "amount"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    std::fs::write(&csv, "distance_mm,duration_ms\n20,x\n").unwrap();
    assert_eq!(code(&tasteprint(&["calibrate", "fit", "--samples", s(&csv), "--model", "resolution"])), 2);
}

#[test]
fn calibrate_measure() {
    let ws = Workspace::new();
    // 60 mm plate photographed square-on at 10 px/mm, 7 mm dyed disc at (30, 30)
    let img = RasterImage::from_fn(600, 600, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let inside = (px - 300.0).powi(2) + (py - 300.0).powi(2) <= 35.0f64.powi(2);
        if inside { [40, 40, 40] } else { [240, 240, 240] }
    });
    let mut bytes = Vec::new();
    write_ppm(&mut bytes, &img).unwrap();
    std::fs::write(ws.path("spot.ppm"), bytes).unwrap();
    let corners = [(0.0, 0.0), (60.0, 0.0), (60.0, 60.0), (0.0, 60.0)];
    let markers = serde_json::json!({
        "correspondences": corners.iter().map(|&(x, y)| serde_json::json!({"px": [x * 10.0, y * 10.0], "mm": [x, y]})).collect::<Vec<_>>()
    });
    std::fs::write(ws.path("markers.json"), markers.to_string()).unwrap();

    let samples = ws.path("samples.csv");
    let o = tasteprint(&[
        "calibrate", "measure", "--image", s(&ws.path("spot.ppm")), "--markers", s(&ws.path("markers.json")),
        "--center", "30,30", "--append-to", s(&samples), "--distance", "20", "--duration", "20", "--replicate", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((m["equivalent_diameter"].as_f64().unwrap() - 7.0).abs() <= 0.2);
    let rows = read_samples_csv(std::fs::read(&samples).unwrap().as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].distance, rows[0].duration, rows[0].replicate_index), (20.0, 20.0, 2));

    let o = tasteprint(&[
        "calibrate", "measure", "--image", s(&ws.path("spot.ppm")), "--markers", s(&ws.path("markers.json")),
        "--center", "-30,-30",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn serve_reports_a_busy_port() {
    let ws = Workspace::new();
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let project = ws.path("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_tasteprint"))
        .args(["serve", "--port", &port])
        .env("TASTEPRINT_PROJECT_DIR", &project)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot listen"), "{}", stderr(&o));
    assert!(project.is_dir());
}

#[test]
fn obj_meshes_slice_too() {
    let ws = Workspace::new();
    let mesh = cylinder(Point2::new(0.0, 0.0), 5.0, 3.2, 32);
    let mut obj = String::new();
    for t in mesh.triangles() {
        for v in t {
            obj.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
    }
    for i in 0..mesh.triangle_count() {
        obj.push_str(&format!("f {} {} {}\n", 3 * i + 1, 3 * i + 2, 3 * i + 3));
    }
    std::fs::write(ws.path("puck.obj"), obj).unwrap();
    let o = tasteprint(&["slice", "--mesh", s(&ws.path("puck.obj")), "--out", s(&ws.path("p.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("2 layers"));
}
