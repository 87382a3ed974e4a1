use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    /// One value per column; `None` renders as a dash.
    pub cells: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(title: &str, row_header: &str, columns: &[&str]) -> Self {
        Self {
            title: title.to_string(),
            row_header: row_header.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, label: &str, cells: Vec<Option<f64>>) {
        let mut cells = cells;
        cells.resize(self.columns.len(), None);
        self.rows.push(TableRow {
            label: label.to_string(),
            cells,
        });
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.cells.iter().all(Option::is_some))
    }
}

/// Aligned plain-text rendering with values to one decimal place.
pub fn render_table(table: &Table) -> String {
    let fmt = |v: &Option<f64>| v.map_or("—".to_string(), |x| format!("{x:.1}"));
    let label_w = table
        .rows
        .iter()
        .map(|r| r.label.chars().count())
        .chain([table.row_header.chars().count()])
        .max()
        .unwrap_or(0);
    let col_w: Vec<usize> = table
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            table
                .rows
                .iter()
                .map(|r| fmt(&r.cells[i]).chars().count())
                .chain([c.chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let pad = |s: &str, w: usize| format!("{}{}", " ".repeat(w.saturating_sub(s.chars().count())), s);
    let mut out = String::new();
    if !table.title.is_empty() {
        out.push_str(&table.title);
        out.push('\n');
    }
    let mut header = format!("{:<label_w$}", table.row_header);
    for (c, &w) in table.columns.iter().zip(&col_w) {
        header.push_str("  ");
        header.push_str(&pad(c, w));
    }
    out.push_str(header.trim_end());
    out.push('\n');
    out.push_str(&"-".repeat(header.trim_end().chars().count()));
    out.push('\n');
    for r in &table.rows {
        let mut line = format!("{}{}", r.label, " ".repeat(label_w - r.label.chars().count()));
        for (v, &w) in r.cells.iter().zip(&col_w) {
            line.push_str("  ");
            line.push_str(&pad(&fmt(v), w));
        }
        out.push_str(&line);
        out.push('\n');
    }
    for f in &table.footer {
        out.push_str(f);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_headers() {
        let t = Table::new("", "System", &["1spk", "2spk"]);
        let s = render_table(&t);
        assert_eq!(s.lines().next().unwrap(), "System  1spk  2spk");
        assert_eq!(s.lines().count(), 2);
        assert!(t.is_complete());
    }

    #[test]
    fn missing_cells_render_as_dash() {
        let mut t = Table::new("T", "System", &["1spk", "2spk"]);
        t.push("aft", vec![Some(1.25), None]);
        let s = render_table(&t);
        assert!(s.contains("aft"));
        assert!(s.contains("1.2") || s.contains("1.3"));
        assert!(s.contains('—'));
        assert!(!t.is_complete());
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<Table>(&json).unwrap(), t);
    }
}
