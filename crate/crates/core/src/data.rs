//! Multitask datasets: one design matrix and target vector per task over a
//! shared feature space.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};

/// Samples of a single task. Rows of `x` are examples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub id: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl TaskData {
    pub fn new(id: impl Into<String>, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let id = id.into();
        if x.nrows() != y.len() {
            return Err(Error::dims(format!(
                "task {id}: design matrix has {} rows but target has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid(format!("task {id} has no examples")));
        }
        ensure_finite(&format!("design matrix of task {id}"), x.iter())?;
        ensure_finite(&format!("targets of task {id}"), y.iter())?;
        Ok(TaskData { id, x, y })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    /// Copy of the task restricted to the given example rows.
    pub fn select_rows(&self, rows: &[usize]) -> TaskData {
        TaskData {
            id: self.id.clone(),
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
        }
    }
}

/// `T` tasks sharing `d` features.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskDataset {
    tasks: Vec<TaskData>,
    d: usize,
}

impl MultitaskDataset {
    pub fn new(tasks: Vec<TaskData>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| Error::invalid("dataset must contain at least one task"))?;
        let d = first.x.ncols();
        if d == 0 {
            return Err(Error::invalid("dataset must have at least one feature"));
        }
        for task in &tasks {
            if task.x.ncols() != d {
                return Err(Error::dims(format!(
                    "task {} has {} features, expected {d}",
                    task.id,
                    task.x.ncols()
                )));
            }
        }
        Ok(MultitaskDataset { tasks, d })
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    /// Per-task row selection; `rows[t]` lists the examples kept for task `t`.
    pub fn select_rows(&self, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != self.tasks.len() {
            return Err(Error::dims(format!(
                "row selection covers {} tasks, dataset has {}",
                rows.len(),
                self.tasks.len()
            )));
        }
        let tasks = self
            .tasks
            .iter()
            .zip(rows)
            .map(|(task, r)| {
                if r.is_empty() {
                    return Err(Error::invalid(format!("selection leaves task {} empty", task.id)));
                }
                Ok(task.select_rows(r))
            })
            .collect::<Result<Vec<_>>>()?;
        MultitaskDataset::new(tasks)
    }

    /// Reorders tasks; `order[i]` is the index of the task placed at position `i`.
    pub fn permute_tasks(&self, order: &[usize]) -> Self {
        MultitaskDataset {
            tasks: order.iter().map(|&i| self.tasks[i].clone()).collect(),
            d: self.d,
        }
    }

    /// Reorders feature columns consistently in every task.
    pub fn permute_features(&self, order: &[usize]) -> Self {
        MultitaskDataset {
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskData {
                    id: t.id.clone(),
                    x: t.x.select_columns(order),
                    y: t.y.clone(),
                })
                .collect(),
            d: self.d,
        }
    }

    pub(crate) fn ensure_labels(&self) -> Result<()> {
        for task in &self.tasks {
            if let Some(bad) = task.y.iter().find(|&&v| v != 1.0 && v != -1.0) {
                return Err(Error::invalid(format!(
                    "task {} has label {bad}; logistic loss requires labels in {{-1, +1}}",
                    task.id
                )));
            }
        }
        Ok(())
    }
}
