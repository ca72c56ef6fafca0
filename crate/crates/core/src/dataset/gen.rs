//! Deterministic generator for a retail-style invoice CSV.
//!
//! Produces data with the same shape as the public Online Retail export:
//! 8 columns, rows grouped by invoice, mostly-numeric id columns, worded
//! descriptions, one date per invoice, a heavy United Kingdom skew, and
//! ~25% missing customer ids. Useful for demos and for exercising the
//! pipeline when the real dataset is not at hand.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    pub invoices: usize,
    pub seed: u64,
    /// Average rows per invoice; the real corpus averages in the low twenties.
    pub mean_rows: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            invoices: 1000,
            seed: 0,
            mean_rows: 24.0,
        }
    }
}

const WORDS: [&str; 96] = [
    "GLASS", "HEART", "HOLDER", "WHITE", "HANGING", "LANTERN", "METAL", "RED", "VINTAGE",
    "UNION", "JACK", "DOILY", "CAKE", "CASES", "PACK", "SET", "BOX", "TEA", "MUG", "REGENCY",
    "JAM", "JARS", "POLKA", "DOT", "STAR", "CHRISTMAS", "LIGHTS", "FELT", "EGG", "COSY",
    "WOOD", "FRAME", "ANTIQUE", "SILVER", "BELL", "GARLAND", "PAPER", "CHAIN", "KIT",
    "RETRO", "SPOT", "TRAY", "LUNCH", "BAG", "BOTTLE", "WATER", "HOT", "SKULL", "DESIGN",
    "CHARLOTTE", "DOOR", "MAT", "IVORY", "KNITTED", "BUNTING", "SPOTTY", "SCOTTIE", "DOG",
    "CUSHION", "COVER", "JUMBO", "SHOPPER", "STRAWBERRY", "CERAMIC", "TOP", "STORAGE",
    "TIN", "CREAM", "CUPID", "HEARTS", "COAT", "HANGER", "BIRDCAGE", "PINK", "BLUE",
    "T-LIGHT", "FAIRY", "CANDLE", "POSTAGE", "ASSORTED", "COLOUR", "BIRD", "ORNAMENT",
    "HOME", "SWEET", "ALARM", "CLOCK", "BAKELIKE", "GREEN", "PANTRY", "JUG", "POPCORN",
    "MINI", "CHALKBOARD", "WOODEN", "TIER",
];

const COUNTRIES: [&str; 38] = [
    "United Kingdom", "France", "Australia", "Netherlands", "Germany", "Norway", "EIRE",
    "Switzerland", "Spain", "Poland", "Portugal", "Italy", "Belgium", "Lithuania", "Japan",
    "Iceland", "Channel Islands", "Denmark", "Cyprus", "Sweden", "Finland", "Austria",
    "Greece", "Singapore", "Lebanon", "United Arab Emirates", "Israel", "Saudi Arabia",
    "Czech Republic", "Canada", "Unspecified", "Brazil", "USA", "European Community",
    "Bahrain", "Malta", "RSA", "Hong Kong",
];

struct Product {
    stock_code: String,
    description: String,
    unit_price: String,
}

fn build_products(rng: &mut ChaCha8Rng, count: usize) -> Vec<Product> {
    (0..count)
        .map(|_| {
            let code_num: u32 = rng.random_range(10000..96000);
            let stock_code = if rng.random::<f64>() < 0.15 {
                let suffix = (b'A' + rng.random_range(0..7u8)) as char;
                format!("{code_num}{suffix}")
            } else {
                code_num.to_string()
            };
            let n_words = rng.random_range(2..=4);
            let mut words: Vec<&str> = (0..n_words)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect();
            // a small share of descriptions carry a comma, exercising quoting
            let description = if rng.random::<f64>() < 0.02 && words.len() > 2 {
                let tail = words.split_off(words.len() - 1);
                format!("{}, {}", words.join(" "), tail.join(" "))
            } else {
                words.join(" ")
            };
            let unit_price = format!("{:.2}", rng.random_range(19..=2999) as f64 / 100.0);
            Product {
                stock_code,
                description,
                unit_price,
            }
        })
        .collect()
}

/// Generate `opts.invoices` invoices and write them as a CSV with the usual
/// 8-column header. Deterministic given the seed.
pub fn generate_retail_csv(path: &Path, opts: &GenOptions) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let products = build_products(&mut rng, 2400.max(opts.invoices / 2));
    let customers: Vec<String> = (0..1200)
        .map(|_| rng.random_range(12000..19000u32).to_string())
        .collect();

    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "InvoiceNo",
        "StockCode",
        "Description",
        "Quantity",
        "InvoiceDate",
        "UnitPrice",
        "CustomerID",
        "Country",
    ])?;
    for i in 0..opts.invoices {
        let invoice_no = if rng.random::<f64>() < 0.02 {
            format!("C{}", 536365 + i)
        } else {
            (536365 + i).to_string()
        };
        let month = rng.random_range(1..=12u32);
        let day = rng.random_range(1..=28u32);
        let hour = rng.random_range(7..=20u32);
        let minute = rng.random_range(0..60u32);
        let date = format!("{month}/{day}/2011 {hour}:{minute:02}");
        let customer = if rng.random::<f64>() < 0.25 {
            String::new() // missing; the loader fills 00000
        } else {
            customers[rng.random_range(0..customers.len())].clone()
        };
        let country = if rng.random::<f64>() < 0.8 {
            COUNTRIES[0]
        } else {
            COUNTRIES[rng.random_range(0..COUNTRIES.len())]
        };
        let u: f64 = rng.random();
        let rows = ((-opts.mean_rows * (1.0 - u).ln()).round() as i64).clamp(1, 120);
        for _ in 0..rows {
            let product = &products[rng.random_range(0..products.len())];
            let qty: i64 = if rng.random::<f64>() < 0.08 {
                -(rng.random_range(1..=24i64))
            } else {
                rng.random_range(1..=48i64)
            };
            writer.write_record([
                invoice_no.as_str(),
                product.stock_code.as_str(),
                product.description.as_str(),
                &qty.to_string(),
                &date,
                product.unit_price.as_str(),
                customer.as_str(),
                country,
            ])?;
        }
    }
    writer.flush().map_err(std::io::Error::from)?;
    Ok(())
}
