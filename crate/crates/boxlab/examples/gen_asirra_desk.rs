//! Regenerates the desk-scale cats-vs-dogs fixture under
//! `tests/fixtures/asirra_desk/`:
//!
//! - `images/`: 270 tiny, distinct PNGs (135 `cat_NNN.png`, 135 `dog_NNN.png`)
//! - `responses.tsv`: recorded model replies keyed by image content hash
//! - `truth.tab`: ground-truth class per file name
//! - `manifest.tsv`: per-item tally (reply, whether it names the right
//!   species, whether it equals the truth word exactly)
//!
//! The correctness columns come from the breed lists below, not from the
//! label parser, so the manifest is an independent oracle for the scorer.
//!
//! Run with `cargo run -p boxlab --example gen_asirra_desk [out_dir]`.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use image::{ImageFormat, Rgb, RgbImage};
use boxlab_core::image_store::content_hash;

const CAT_BREEDS: [&str; 10] = [
    "Siamese cat",
    "Himalayan cat",
    "Persian cat",
    "Maine Coon",
    "Bengal cat",
    "Ragdoll",
    "British Shorthair",
    "Sphynx",
    "Russian Blue",
    "Abyssinian",
];
const DOG_BREEDS: [&str; 12] = [
    "Dachshund",
    "German Shepherd",
    "Golden Retriever",
    "Labrador Retriever",
    "Beagle",
    "Poodle",
    "Siberian Husky",
    "Bulldog",
    "Boxer",
    "Shiba Inu",
    "Chihuahua",
    "Pug",
];

/// The single wrong reply: a cat photo answered as a dog breed.
const WRONG_ITEM: (&str, usize) = ("cat", 77);
const WRONG_REPLY: &str = "Chihuahua (Dog)";

fn image_bytes(species: u8, n: usize) -> Vec<u8> {
    let (w, h) = (12u32, 10u32);
    let base = if species == 0 { [200u8, 150, 90] } else { [90u8, 120, 200] };
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        Rgb([base[0].wrapping_add((x * 9) as u8), base[1].wrapping_add((y * 11) as u8), base[2]])
    });
    // Encode the item number in the first row so every image is distinct.
    for bit in 0..w {
        if (n >> bit) & 1 == 1 {
            img.put_pixel(bit, 0, Rgb([0, 0, 0]));
        }
    }
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("png encodes");
    out.into_inner()
}

/// (reply, base-correct, exact-correct)
fn reply(species: &str, n: usize) -> (String, bool, bool) {
    if (species, n) == WRONG_ITEM {
        return (WRONG_REPLY.to_string(), false, false);
    }
    let (breeds, base): (&[&str], &str) = if species == "cat" { (&CAT_BREEDS, "Cat") } else { (&DOG_BREEDS, "Dog") };
    match n % 15 {
        // Bare species word.
        0 => (base.to_string(), true, true),
        // Bare breed, resolved through the taxonomy.
        7 => (breeds[n % breeds.len()].to_string(), true, false),
        // Fine label followed by a second explanatory line.
        11 => (format!("{} ({base})\nThe selected region shows a {}.", breeds[n % breeds.len()], base.to_lowercase()), true, false),
        _ => (format!("{} ({base})", breeds[n % breeds.len()]), true, false),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/asirra_desk"));
    let images = out.join("images");
    fs::create_dir_all(&images).unwrap();

    let mut responses = String::from("# recorded replies keyed by image content hash\n");
    let mut truth = String::from("# file name\tclass\n");
    let mut manifest = String::from("file\ttruth\treply\tbase_correct\texact_correct\n");
    let (mut total, mut base_ok, mut exact_ok) = (0, 0, 0);
    for (code, species) in [(0u8, "cat"), (1u8, "dog")] {
        for n in 1..=135 {
            let name = format!("{species}_{n:03}.png");
            let bytes = image_bytes(code, n);
            fs::write(images.join(&name), &bytes).unwrap();
            let (text, base, exact) = reply(species, n);
            writeln!(responses, "{}\t{}", content_hash(&bytes), escape(&text)).unwrap();
            writeln!(truth, "{name}\t{species}").unwrap();
            writeln!(manifest, "{name}\t{species}\t{}\t{}\t{}", escape(&text), base as u8, exact as u8).unwrap();
            total += 1;
            base_ok += base as u32;
            exact_ok += exact as u32;
        }
    }
    fs::write(out.join("responses.tsv"), responses).unwrap();
    fs::write(out.join("truth.tab"), truth).unwrap();
    fs::write(out.join("manifest.tsv"), manifest).unwrap();
    println!("{total} items, {base_ok} base-class correct, {exact_ok} exact");
}
